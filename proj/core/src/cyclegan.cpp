#include "invloc/cyclegan.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "invloc/common.hpp"
#include "invloc/container.hpp"

namespace invloc {
namespace fs = std::filesystem;

namespace {

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  GeneratorSpec s;
  s.image_size = j.at("image_size").get<int>();
  s.in_channels = j.at("in_channels").get<int>();
  s.out_channels = j.at("out_channels").get<int>();
  s.base_channels = j.at("base_channels").get<int>();
  s.init_std = j.at("init_std").get<double>();
  return s;
}

DiscriminatorSpec discriminator_spec_from_json(const nlohmann::json& j) {
  DiscriminatorSpec s;
  s.in_channels = j.at("in_channels").get<int>();
  s.base_channels = j.at("base_channels").get<int>();
  s.layers = j.at("layers").get<int>();
  s.init_std = j.at("init_std").get<double>();
  return s;
}

GanTrainConfig config_from_json(const nlohmann::json& j) {
  GanTrainConfig c;
  c.omega = j.at("omega").get<double>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.max_iters = j.at("max_iters").get<std::int64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
  c.image_size = j.at("image_size").get<int>();
  c.loss_form = parse_loss_form(j.at("loss_form").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void append_blobs(Container& c, const NamedTensors& tensors, const std::string& prefix) {
  for (const auto& [name, t] : tensors) {
    Blob b;
    b.name = prefix + name;
    const auto cpu = t.detach().to(torch::kFloat32).contiguous();
    b.shape.assign(cpu.sizes().begin(), cpu.sizes().end());
    b.values.assign(cpu.data_ptr<float>(), cpu.data_ptr<float>() + cpu.numel());
    c.blobs.push_back(std::move(b));
  }
}

torch::Tensor blob_tensor(const Blob& b) {
  return torch::from_blob(const_cast<float*>(b.values.data()), b.shape, torch::kFloat32).clone();
}

void load_module(torch::nn::Module& module, const Container& c, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  for (auto& p : module.named_parameters()) {
    const Blob& b = c.blob(prefix + p.key());
    if (std::vector<std::int64_t>(p.value().sizes().begin(), p.value().sizes().end()) != b.shape)
      throw Error("checkpoint parameter '" + prefix + p.key() + "' has the wrong shape");
    p.value().copy_(blob_tensor(b));
  }
}

NamedTensors generator_params(CycleGanModel& m) {
  auto out = named_parameters(*m.g_ab, "g_ab/");
  auto ba = named_parameters(*m.g_ba, "g_ba/");
  out.insert(out.end(), ba.begin(), ba.end());
  return out;
}

NamedTensors discriminator_params(CycleGanModel& m) {
  auto out = named_parameters(*m.d_a, "d_a/");
  auto b = named_parameters(*m.d_b, "d_b/");
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

AdamOptions adam_options(const GanTrainConfig& c) { return {c.lr, c.adam_beta1, c.adam_beta2, c.adam_eps}; }

void restore_optimizer(Adam& opt, const NamedTensors& state, std::int64_t steps) {
  if (state.empty()) return;
  opt.load_state(
      [&](const std::string& name) {
        for (const auto& [n, t] : state)
          if (n == name) return t;
        throw Error("checkpoint optimizer state lacks '" + name + "'");
      },
      steps);
}

NamedTensors snapshot(const NamedTensors& state) {
  NamedTensors out;
  for (const auto& [n, t] : state) out.emplace_back(n, t.detach().clone());
  return out;
}

torch::Tensor gather(const DomainSplit& split, const std::vector<std::size_t>& pool, std::uint64_t seed,
                     std::int64_t iter, int batch) {
  std::vector<torch::Tensor> items;
  for (int j = 0; j < batch; ++j) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(iter) * 131 + j));
    items.push_back(to_tensor(split.image(pool[h % pool.size()])));
  }
  return torch::cat(items, 0);
}

void ensure_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = dir / ".write_probe";
  std::ofstream out(probe);
  if (ec || !out) throw Error("output directory is not writable: " + dir.string());
  out.close();
  fs::remove(probe, ec);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void GanTrainConfig::validate() const {
  if (!(omega > 0.0)) throw Error("gan omega must be positive");
  if (!(lr > 0.0)) throw Error("gan learning rate must be positive");
  if (batch_size < 1) throw Error("gan batch size must be at least 1");
  if (max_iters < 0) throw Error("gan max_iters must be non-negative");
  if (checkpoint_every < 1) throw Error("gan checkpoint_every must be at least 1");
  if (image_size < 8 || image_size % 4 != 0) throw Error("gan image size must be a multiple of 4");
}

std::string Checkpoint::feature_hash() const {
  std::uint64_t h = fnv1a64(std::string_view("g_ab"));
  for (const auto& p : model.g_ab->named_parameters()) {
    h = fnv1a64(p.key(), h);
    const auto cpu = p.value().detach().to(torch::kFloat32).contiguous();
    h = fnv1a64(std::as_bytes(std::span(cpu.data_ptr<float>(), static_cast<std::size_t>(cpu.numel()))), h);
  }
  return hex64(h);
}

nlohmann::json to_json(const GeneratorSpec& s) {
  return {{"image_size", s.image_size}, {"in_channels", s.in_channels}, {"out_channels", s.out_channels},
          {"base_channels", s.base_channels}, {"init_std", s.init_std}};
}

nlohmann::json to_json(const DiscriminatorSpec& s) {
  return {{"in_channels", s.in_channels}, {"base_channels", s.base_channels}, {"layers", s.layers},
          {"init_std", s.init_std}};
}

nlohmann::json to_json(const GanTrainConfig& c) {
  return {{"omega", c.omega}, {"lr", c.lr}, {"batch_size", c.batch_size}, {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2}, {"adam_eps", c.adam_eps}, {"max_iters", c.max_iters},
          {"checkpoint_every", c.checkpoint_every}, {"image_size", c.image_size},
          {"loss_form", to_string(c.loss_form)}, {"seed", c.seed}};
}

Checkpoint init_checkpoint(const CycleGanSpec& spec, const GanTrainConfig& config) {
  config.validate();
  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.spec.generator.image_size = config.image_size;
  ckpt.spec.discriminator.in_channels = ckpt.spec.generator.out_channels;
  if (ckpt.spec.generator.in_channels != ckpt.spec.generator.out_channels)
    throw Error("cycle translation needs equal input and output channel counts");
  ckpt.config = config;
  torch::manual_seed(substream_seed(config.seed, "gan.init"));
  ckpt.model.g_ab = Generator(ckpt.spec.generator);
  ckpt.model.g_ba = Generator(ckpt.spec.generator);
  ckpt.model.d_a = Discriminator(ckpt.spec.discriminator);
  ckpt.model.d_b = Discriminator(ckpt.spec.discriminator);
  return ckpt;
}

void write_loss_log_header(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write loss log " + path.string());
  out << "iter,total,l_gan_ab,l_gan_ba,l_cyc\n";
}

void append_loss_log(const fs::path& path, const LossRecord& r) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot append to loss log " + path.string());
  out << r.iter << ',' << format_double(r.total) << ',' << format_double(r.gan_ab) << ','
      << format_double(r.gan_ba) << ',' << format_double(r.cycle) << '\n';
}

std::vector<LossRecord> read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read loss log " + path.string());
  std::vector<LossRecord> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    LossRecord r;
    char comma;
    ss >> r.iter >> comma >> r.total >> comma >> r.gan_ab >> comma >> r.gan_ba >> comma >> r.cycle;
    if (!ss) throw Error("malformed loss log row: " + line);
    out.push_back(r);
  }
  return out;
}

Checkpoint resume_cyclegan(Checkpoint ckpt, const DomainSplit& split, const fs::path& out_dir,
                           std::int64_t max_iters, const TrainObserver& observer) {
  const GanTrainConfig& cfg = ckpt.config;
  cfg.validate();
  const auto pool_a = split.pooled_a();
  const auto& pool_b = split.domain_b.indices;
  if (pool_a.empty() || pool_b.empty()) throw Error("train_cyclegan: both domains need images");
  const ImageTensor& probe = split.image(pool_a.front());
  if (probe.height != cfg.image_size || probe.width != cfg.image_size ||
      probe.channels != ckpt.spec.generator.in_channels)
    throw Error("training images are " + std::to_string(probe.height) + "×" + std::to_string(probe.width) +
                ", expected " + std::to_string(cfg.image_size));
  ensure_writable(out_dir);

  const fs::path log_path = out_dir / "loss.csv";
  if (!fs::exists(log_path)) write_loss_log_header(log_path);
  const fs::path latest = out_dir / "checkpoint_latest.bin";

  auto& m = ckpt.model;
  Adam g_opt(generator_params(m), adam_options(cfg));
  Adam d_opt(discriminator_params(m), adam_options(cfg));
  restore_optimizer(g_opt, ckpt.generator_optimizer, ckpt.iteration);
  restore_optimizer(d_opt, ckpt.discriminator_optimizer, ckpt.iteration);

  const std::uint64_t sample_a = substream_seed(cfg.seed, "gan.sample.a");
  const std::uint64_t sample_b = substream_seed(cfg.seed, "gan.sample.b");
  auto keep_state = [&] {
    ckpt.generator_optimizer = snapshot(g_opt.state());
    ckpt.discriminator_optimizer = snapshot(d_opt.state());
  };

  for (std::int64_t iter = ckpt.iteration + 1; iter <= max_iters; ++iter) {
    const auto a = gather(split, pool_a, sample_a, iter, cfg.batch_size);
    const auto b = gather(split, pool_b, sample_b, iter, cfg.batch_size);

    // Generator update.
    const auto fake_b = m.g_ab->forward(a);
    const auto fake_a = m.g_ba->forward(b);
    const auto cyc = (m.g_ba->forward(fake_b) - a).abs().mean() + (m.g_ab->forward(fake_a) - b).abs().mean();
    const auto adv = generator_adversarial_loss(m.d_b->forward(fake_b), cfg.loss_form) +
                     generator_adversarial_loss(m.d_a->forward(fake_a), cfg.loss_form);
    const auto loss_g = adv + cfg.omega * cyc;
    if (!std::isfinite(loss_g.item<double>()))
      throw Error("non-finite generator loss at iteration " + std::to_string(iter) +
                  "; last good checkpoint: " + latest.string());
    g_opt.zero_grad();
    d_opt.zero_grad();
    loss_g.backward();
    g_opt.step();

    // Discriminator update on the same fakes.
    d_opt.zero_grad();
    const auto ld_b = discriminator_loss(m.d_b->forward(b), m.d_b->forward(fake_b.detach()), cfg.loss_form);
    const auto ld_a = discriminator_loss(m.d_a->forward(a), m.d_a->forward(fake_a.detach()), cfg.loss_form);
    const auto loss_d = ld_a + ld_b;
    if (!std::isfinite(loss_d.item<double>()))
      throw Error("non-finite discriminator loss at iteration " + std::to_string(iter) +
                  "; last good checkpoint: " + latest.string());
    loss_d.backward();
    d_opt.step();

    LossRecord rec;
    rec.iter = iter;
    rec.gan_ab = -ld_b.item<double>();
    rec.gan_ba = -ld_a.item<double>();
    rec.cycle = cyc.item<double>();
    rec.total = total_objective({rec.gan_ab, rec.gan_ba, rec.cycle}, cfg.omega);
    ckpt.history.push_back(rec);
    ckpt.iteration = iter;
    append_loss_log(log_path, rec);
    if (observer) observer(rec);

    if (iter % cfg.checkpoint_every == 0 && iter != max_iters) {
      keep_state();
      save_checkpoint(ckpt, latest);
    }
  }
  if (g_opt.step_count() > 0) keep_state();
  save_checkpoint(ckpt, out_dir / "checkpoint.bin");
  return ckpt;
}

ObjectiveTerms evaluate_objective(const Checkpoint& ckpt, const DomainSplit& split, int samples,
                                  std::uint64_t seed) {
  if (samples < 1) throw Error("evaluate_objective needs at least one sample");
  const auto pool_a = split.pooled_a();
  const auto& pool_b = split.domain_b.indices;
  if (pool_a.empty() || pool_b.empty()) throw Error("evaluate_objective: both domains need images");
  torch::NoGradGuard no_grad;
  auto& m = const_cast<CycleGanModel&>(ckpt.model);
  const LossForm form = ckpt.config.loss_form;
  const std::uint64_t sa = substream_seed(seed, "eval.a"), sb = substream_seed(seed, "eval.b");
  ObjectiveTerms sum;
  for (int k = 0; k < samples; ++k) {
    const auto a = gather(split, pool_a, sa, k, 1);
    const auto b = gather(split, pool_b, sb, k, 1);
    const auto fake_b = m.g_ab->forward(a);
    const auto fake_a = m.g_ba->forward(b);
    sum.cycle += ((m.g_ba->forward(fake_b) - a).abs().mean() + (m.g_ab->forward(fake_a) - b).abs().mean()).item<double>();
    sum.gan_ab -= discriminator_loss(m.d_b->forward(b), m.d_b->forward(fake_b), form).item<double>();
    sum.gan_ba -= discriminator_loss(m.d_a->forward(a), m.d_a->forward(fake_a), form).item<double>();
  }
  return {sum.gan_ab / samples, sum.gan_ba / samples, sum.cycle / samples};
}

Checkpoint train_cyclegan(const GanTrainConfig& config, const CycleGanSpec& spec, const DomainSplit& split,
                          const fs::path& out_dir, const TrainObserver& observer) {
  Checkpoint ckpt = init_checkpoint(spec, config);
  ensure_writable(out_dir);
  write_loss_log_header(out_dir / "loss.csv");
  return resume_cyclegan(std::move(ckpt), split, out_dir, config.max_iters, observer);
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  Container c;
  c.kind = "cyclegan";
  c.meta["generator"] = to_json(ckpt.spec.generator);
  c.meta["discriminator"] = to_json(ckpt.spec.discriminator);
  c.meta["config"] = to_json(ckpt.config);
  c.meta["iteration"] = ckpt.iteration;
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : ckpt.history) history.push_back({r.iter, r.total, r.gan_ab, r.gan_ba, r.cycle});
  c.meta["history"] = history;
  c.meta["has_optimizer"] = !ckpt.generator_optimizer.empty();
  auto& m = const_cast<CycleGanModel&>(ckpt.model);
  append_blobs(c, named_parameters(*m.g_ab, ""), "g_ab/");
  append_blobs(c, named_parameters(*m.g_ba, ""), "g_ba/");
  append_blobs(c, named_parameters(*m.d_a, ""), "d_a/");
  append_blobs(c, named_parameters(*m.d_b, ""), "d_b/");
  append_blobs(c, ckpt.generator_optimizer, "optim/");
  append_blobs(c, ckpt.discriminator_optimizer, "optim/");
  write_container(c, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const Container c = read_container(path, "cyclegan");
  Checkpoint ckpt;
  try {
    ckpt.spec.generator = generator_spec_from_json(c.meta.at("generator"));
    ckpt.spec.discriminator = discriminator_spec_from_json(c.meta.at("discriminator"));
    ckpt.config = config_from_json(c.meta.at("config"));
    ckpt.iteration = c.meta.at("iteration").get<std::int64_t>();
    for (const auto& row : c.meta.at("history"))
      ckpt.history.push_back({row.at(0).get<std::int64_t>(), row.at(1).get<double>(), row.at(2).get<double>(),
                              row.at(3).get<double>(), row.at(4).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": incomplete checkpoint header: " + e.what());
  }
  ckpt.model.g_ab = Generator(ckpt.spec.generator);
  ckpt.model.g_ba = Generator(ckpt.spec.generator);
  ckpt.model.d_a = Discriminator(ckpt.spec.discriminator);
  ckpt.model.d_b = Discriminator(ckpt.spec.discriminator);
  load_module(*ckpt.model.g_ab, c, "g_ab/");
  load_module(*ckpt.model.g_ba, c, "g_ba/");
  load_module(*ckpt.model.d_a, c, "d_a/");
  load_module(*ckpt.model.d_b, c, "d_b/");
  if (c.meta.value("has_optimizer", false)) {
    for (const auto& [name, p] : generator_params(ckpt.model))
      for (const char* suffix : {"/m", "/v"})
        ckpt.generator_optimizer.emplace_back(name + suffix, blob_tensor(c.blob("optim/" + name + suffix)));
    for (const auto& [name, p] : discriminator_params(ckpt.model))
      for (const char* suffix : {"/m", "/v"})
        ckpt.discriminator_optimizer.emplace_back(name + suffix, blob_tensor(c.blob("optim/" + name + suffix)));
  }
  return ckpt;
}

}  // namespace invloc
