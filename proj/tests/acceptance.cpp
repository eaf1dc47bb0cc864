// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Criteria 6-8 share one trained GAN checkpoint.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>

#include <CLI11.hpp>

#include "config.hpp"
#include "invloc/fusion.hpp"
#include "invloc/gan_losses.hpp"
#include "invloc/generator.hpp"
#include "invloc/layer_analysis.hpp"
#include "invloc/placerec.hpp"
#include "invloc/posereg.hpp"
#include "invloc/ssim.hpp"
#include "invloc/synthetic.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"

using namespace invloc;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---------------------------------------------------------------- 1

Verdict layer_shapes() {
  const std::map<std::string, TapShape> table = {
      {"Conv1", {256, 256, 64}},  {"Conv2", {128, 128, 128}}, {"Conv3", {64, 64, 256}},  {"Res1", {64, 64, 256}},
      {"Res2", {64, 64, 256}},    {"Res3", {64, 64, 256}},    {"Res4", {64, 64, 256}},   {"Res5", {64, 64, 256}},
      {"Res6", {64, 64, 256}},    {"Res7", {64, 64, 256}},    {"Res8", {64, 64, 256}},   {"Res9", {64, 64, 256}},
      {"Uconv1", {64, 64, 256}},  {"Uconv2", {128, 128, 128}}, {"Uconv3", {256, 256, 3}},
  };
  Generator g(GeneratorSpec{});
  std::set<std::string> taps;
  for (const auto& [k, v] : table) taps.insert(k);
  const auto out = generator_forward(g, ImageTensor(256, 256, 3, 0.25f), taps);
  int ok = 0;
  std::string bad;
  for (const auto& [name, s] : table) {
    const auto& t = out.taps.at(name);
    if (t.size(0) == s.channels && t.size(1) == s.height && t.size(2) == s.width) ++ok;
    else bad += " " + name;
  }
  return {ok == 15 && out.taps.size() == 15, fmt("%d/15 taps match%s", ok, bad.c_str())};
}

// ---------------------------------------------------------------- 2

void sampled_param_check(torch::Tensor param, const std::function<torch::Tensor()>& loss, int samples,
                         std::mt19937_64& rng, testing::FdStats& stats) {
  const auto grads = torch::autograd::grad({loss()}, {param})[0].view({-1});
  std::uniform_int_distribution<std::int64_t> pick(0, param.numel() - 1);
  torch::NoGradGuard ng;
  auto flat = param.view({-1});
  for (int s = 0; s < samples; ++s) {
    const auto i = pick(rng);
    const double orig = flat[i].item<double>();
    flat[i] = orig + 1e-6;
    const double up = loss().item<double>();
    flat[i] = orig - 1e-6;
    const double down = loss().item<double>();
    flat[i] = orig;
    stats.add(grads[i].item<double>(), (up - down) / 2e-6);
  }
}

Verdict gradient_suite() {
  std::mt19937_64 rng(99);
  GeneratorSpec gs;
  gs.image_size = 8;
  gs.base_channels = 2;
  gs.init_std = 0.3;
  DiscriminatorSpec ds;
  ds.base_channels = 2;
  ds.layers = 1;
  ds.init_std = 0.3;
  torch::manual_seed(99);
  Generator g_ab(gs), g_ba(gs);
  Discriminator d(ds);
  for (torch::nn::Module* m : std::initializer_list<torch::nn::Module*>{g_ab.ptr().get(), g_ba.ptr().get(), d.ptr().get()})
    m->to(torch::kFloat64);
  const auto a = torch::rand({1, 3, 8, 8}, torch::kFloat64) * 2 - 1;
  const auto b = torch::rand({1, 3, 8, 8}, torch::kFloat64) * 2 - 1;
  TensorMap fab = [&](const torch::Tensor& x) { return g_ab->forward(x); };
  TensorMap fba = [&](const torch::Tensor& x) { return g_ba->forward(x); };
  TensorMap fd = [&](const torch::Tensor& x) { return d->forward(x); };

  testing::FdStats gan;
  auto cyc = [&] { return cycle_loss(fab, fba, a, b); };
  for (auto& p : g_ab->parameters()) sampled_param_check(p, cyc, 2, rng, gan);
  for (LossForm form : {LossForm::log, LossForm::least_squares}) {
    auto gl = [&] { return adversarial_losses(fab, fd, b, a, form).generator; };
    auto dl = [&] { return adversarial_losses(fab, fd, b, a, form).discriminator; };
    for (auto& p : d->parameters()) sampled_param_check(p, dl, 2, rng, gan);
    for (auto& p : g_ab->parameters()) sampled_param_check(p, gl, 2, rng, gan);
  }
  // inputs
  auto ai = a.clone().requires_grad_(true);
  const auto ga = torch::autograd::grad({cycle_loss(fab, fba, ai, b)}, {ai})[0].view({-1});
  const auto na = testing::numeric_gradient([&](const torch::Tensor& t) { return cycle_loss(fab, fba, t, b).item<double>(); }, a).view({-1});
  for (std::int64_t i = 0; i < ga.numel(); ++i) gan.add(ga[i].item<double>(), na[i].item<double>());

  const auto gx = torch::randn({6, 3}, torch::kFloat64);
  auto gq = torch::randn({6, 4}, torch::kFloat64);
  gq = gq / gq.norm(2, 1, true);
  const auto x0 = torch::randn({6, 3}, torch::kFloat64), q0 = torch::randn({6, 4}, torch::kFloat64);
  auto x = x0.clone().requires_grad_(true), q = q0.clone().requires_grad_(true);
  const auto grads = torch::autograd::grad({pose_loss(x, q, gx, gq, 250.0)}, {x, q});
  const auto nx = testing::numeric_gradient([&](const torch::Tensor& t) { return pose_loss(t, q0, gx, gq, 250.0).item<double>(); }, x0);
  const auto nq = testing::numeric_gradient([&](const torch::Tensor& t) { return pose_loss(x0, t, gx, gq, 250.0).item<double>(); }, q0);
  const double pose_err = std::max(testing::max_relative_error(grads[0], nx), testing::max_relative_error(grads[1], nq));
  return {gan.ok(1e-4) && pose_err < 1e-5,
          fmt("GAN: %d entries, max rel err %.2e (%d zero-gradient entries, max abs diff %.1e); pose max rel err %.2e",
              gan.checked, gan.max_relative, gan.tiny, gan.max_absolute_tiny, pose_err)};
}

// ---------------------------------------------------------------- 3

Verdict ssim_oracle() {
  std::mt19937_64 rng(3);
  double worst = 0.0, self = 0.0, asym = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int h = 12 + t % 13, w = 12 + (t * 7) % 13;
    const auto a = testing::random_map(rng, h, w), b = testing::random_map(rng, h, w);
    worst = std::max(worst, std::abs(ssim(a, b) - testing::reference_ssim(a, b)));
    self = std::max(self, std::abs(ssim(a, a) - 1.0));
    asym = std::max(asym, std::abs(ssim(a, b) - ssim(b, a)));
  }
  return {worst < 1e-6 && self == 0.0 && asym < 1e-9,
          fmt("max |ssim - ref| %.2e, max |ssim(x,x)-1| %.1e, max asymmetry %.1e", worst, self, asym)};
}

// ---------------------------------------------------------------- 4

Verdict pr_oracle() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  std::bernoulli_distribution coin(0.5);
  int mismatches = 0, monotone = 0;
  for (int t = 0; t < 50; ++t) {
    ScoreMatrix m;
    m.rows = m.cols = 20;
    for (int k = 0; k < 400; ++k) m.scores.push_back(std::round(u(rng) * 100.f) / 100.f);
    for (FrameId i = 0; i < 20; ++i) {
      m.query_ids.push_back(i);
      m.db_ids.push_back(i);
      if (coin(rng)) m.gt.pairs.emplace_back(i, static_cast<FrameId>(rng() % 20));
    }
    if (m.gt.pairs.empty()) m.gt.pairs.emplace_back(0, 0);
    const auto truth = ground_truth_mask(m);
    const auto c = pr_curve(m);
    double best = 0.0;
    for (std::size_t k = 0; k < c.points.size(); ++k) {
      const auto& p = c.points[k];
      const auto bf = testing::brute_force_pr(m.scores, truth, p.threshold);
      if (p.true_positives != bf.tp || p.predicted != bf.predicted || p.precision != bf.precision() ||
          p.recall != bf.recall())
        ++mismatches;
      const double pr = bf.precision(), rc = bf.recall();
      if (pr + rc > 0) best = std::max(best, 2 * pr * rc / (pr + rc));
      if (k > 0 && p.recall > c.points[k - 1].recall) ++monotone;
    }
    if (f1_best(c) != best) ++mismatches;
  }
  return {mismatches == 0 && monotone == 0, fmt("%d mismatched points/F1, %d recall increases", mismatches, monotone)};
}

// ---------------------------------------------------------------- 5-8

const char* kSmokeConfig = R"(seed = 7

[dataset]
conditions = summer,fall,winter,spring
frames = 100
image_size = 64
domain_a = summer,fall,spring
domain_b = winter

[gan]
max_iters = 2000
checkpoint_every = 500
base_channels = 32
disc_base_channels = 32

[features]
layer = Conv3
layers = Conv1,Conv2,Conv3
query_condition = summer
db_condition = winter
frames = 100

[pose]
input_size = 64
batch_size = 32
max_iters = 1000
train_conditions = summer
eval_condition = winter
repeats = 3
)";

struct Smoke {
  PipelineConfig config;
  Checkpoint checkpoint;
  bool trained = false;
  std::string error;
};

Verdict smoke_gan(Smoke& s, bool reuse) {
  const auto ckpt = s.config.gan_dir() / "checkpoint.bin";
  try {
    if (reuse && fs::exists(ckpt) && load_checkpoint(ckpt).iteration == s.config.gan.train.max_iters) {
      s.checkpoint = load_checkpoint(ckpt);
    } else {
      fs::remove_all(s.config.output_dir);
      cmd_synth(s.config);
      s.checkpoint = cmd_train_features(s.config, {.out = &std::cerr});
    }
    s.trained = true;
  } catch (const std::exception& e) {
    s.error = e.what();
    return {false, "training failed: " + s.error};
  }
  const auto log = read_loss_log(s.config.gan_dir() / "loss.csv");
  bool finite = log.size() == static_cast<std::size_t>(s.config.gan.train.max_iters);
  for (const auto& r : log) finite = finite && std::isfinite(r.total);
  const auto dataset = load_dataset(s.config);
  const auto split = split_domains(dataset, s.config.dataset.domain_a, s.config.dataset.domain_b);
  const auto cmp = compare_objective(s.config, s.checkpoint, split, 200);
  const auto trend = objective_trend(log, 100);
  return {finite && cmp.initial > 0 && cmp.ratio() <= 0.7,
          fmt("objective on %d fixed pairs %.4f -> %.4f (ratio %.3f; log means %.4f -> %.4f), %zu finite rows",
              cmp.samples, cmp.initial, cmp.final, cmp.ratio(), trend.initial, trend.final, log.size())};
}

Verdict layer_selection(Smoke& s) {
  if (!s.trained) return {false, "no checkpoint: " + s.error};
  const auto a = cmd_analyze_layers(s.config);
  const double c1 = a.f1_of("Conv1"), c2 = a.f1_of("Conv2"), c3 = a.f1_of("Conv3");
  return {c3 >= c1, fmt("F1 Conv1 %.4f, Conv2 %.4f, Conv3 %.4f on summer vs winter (selected %s)", c1, c2, c3,
                        a.selected_layer.c_str())};
}

Verdict pose_overfit(Smoke& s) {
  if (!s.trained) return {false, "no checkpoint: " + s.error};
  const auto synth = make_synthetic_seasons(s.config.seed, s.config.dataset.frames, s.config.dataset.conditions,
                                            s.config.dataset.image_size);
  const std::string hash = s.checkpoint.feature_hash();
  std::vector<FeatureExample> ex;
  std::vector<Pose> gts;
  for (FrameId f = 0; f < 100 && ex.size() < 20; f += 5) {
    const auto* img = synth.dataset.find("summer", f);
    FusionMap m = extract(s.checkpoint.model.g_ab, img->image, "Conv3");
    m.source_frame = f;
    m.source_checkpoint = hash;
    ex.push_back({m, *synth.poses.find(f)});
    gts.push_back(ex.back().pose);
  }
  PoseTrainConfig cfg = s.config.pose_config(0);
  cfg.max_iters = 3000;
  cfg.batch_size = 20;
  const auto model = train_pose(cfg, ex);
  std::vector<ImageTensor> inputs;
  for (const auto& e : ex) inputs.push_back(prepare_input(e.map, cfg));
  const auto ev = eval_pose(regress(model, inputs), gts);
  return {ev.mean_translation < 0.5 && ev.mean_rotation < 5.0,
          fmt("training-set error %.4f units, %.3f deg after 3000 iters on 20 Conv3 maps", ev.mean_translation,
              ev.mean_rotation)};
}

Verdict cross_condition(Smoke& s) {
  if (!s.trained) return {false, "no checkpoint: " + s.error};
  cmd_train_pose(s.config, {.out = &std::cerr});
  const auto r = cmd_eval_pose(s.config);
  const auto& fusion = r.method("fusion");
  const auto& rgb = r.method("rgb");
  const auto& pooled = r.method("rgb_pooled");
  return {fusion.mean_translation <= rgb.mean_translation,
          fmt("summer->winter mean over %zu seeds: fusion %.3f units / %.2f deg, rgb %.3f / %.2f, rgb pooled %.3f / %.2f",
              fusion.repeats.size(), fusion.mean_translation, fusion.mean_rotation, rgb.mean_translation,
              rgb.mean_rotation, pooled.mean_translation, pooled.mean_rotation)};
}

// ---------------------------------------------------------------- 9

std::map<std::string, std::uint64_t> report_digests(const fs::path& root) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    const auto ext = e.path().extension();
    if (ext != ".csv" && ext != ".json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    const std::string bytes{std::istreambuf_iterator<char>(in), {}};
    out[fs::relative(e.path(), root).string()] = fnv1a64(bytes);
  }
  return out;
}

Verdict determinism(const fs::path& work) {
  const char* cfg = R"(seed = 13
[dataset]
conditions = summer,winter,fall
frames = 12
image_size = 64
domain_a = summer,fall
[gan]
max_iters = 5
checkpoint_every = 2
base_channels = 4
disc_base_channels = 4
[features]
layers = Conv1,Conv2,Conv3,Res1
frames = 8
[placerec]
frames = 8
[pose]
input_size = 32
width = 4
hidden = 16
batch_size = 4
max_iters = 5
)";
  std::vector<std::map<std::string, std::uint64_t>> runs;
  for (const char* name : {"det_a", "det_b"}) {
    auto c = parse_pipeline_config(cfg, work);
    c.output_dir = work / name;
    fs::remove_all(c.output_dir);
    cmd_synth(c);
    cmd_train_features(c);
    cmd_analyze_layers(c);
    cmd_placerec(c);
    cmd_train_pose(c);
    cmd_eval_pose(c);
    runs.push_back(report_digests(c.output_dir));
  }
  std::size_t differing = 0;
  for (const auto& [k, v] : runs[0])
    if (!runs[1].contains(k) || runs[1].at(k) != v) ++differing;
  return {differing == 0 && runs[0].size() == runs[1].size() && !runs[0].empty(),
          fmt("%zu CSV/JSON reports over all six subcommands, %zu differ", runs[0].size(), differing)};
}

// ---------------------------------------------------------------- 10

Verdict quaternion_metric() {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n;
  double self = 0.0, neg = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Quaterniond q = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized();
    self = std::max(self, quaternion_angle(q, q));
    neg = std::max(neg, quaternion_angle(q, Eigen::Quaterniond(-q.coeffs())));
  }
  const double right = quaternion_angle(Eigen::Quaterniond::Identity(),
                                        Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ())));
  return {self < 1e-6 && neg < 1e-6 && std::abs(right - 90.0) <= 1e-6,
          fmt("max angle(q,q) %.1e, max angle(q,-q) %.1e, 90-degree case %.9f", self, neg, right)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "invloc_acceptance";
  std::vector<int> only;
  std::vector<int> known_failures;
  bool reuse = false;
  app.add_option("--work-dir", work, "scratch directory");
  app.add_option("--known-failure", known_failures,
                 "criteria that still print FAIL but do not affect the exit status");
  app.add_option("--only", only, "run only these criteria");
  app.add_flag("--reuse-checkpoint", reuse, "keep a finished smoke checkpoint from an earlier run");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  torch::set_num_threads(1);
  set_warning_sink([](std::string_view) {});

  Smoke smoke;
  smoke.config = parse_pipeline_config(kSmokeConfig, work);
  smoke.config.output_dir = work / "smoke";

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"generator layer shapes at 256x256", layer_shapes},
      {"finite-difference gradient suite", gradient_suite},
      {"SSIM reference equivalence", ssim_oracle},
      {"PR/F1 brute-force equivalence", pr_oracle},
      {"smoke GAN objective <= 70% of initial", [&] { return smoke_gan(smoke, reuse); }},
      {"F1(Conv3) >= F1(Conv1) after smoke training", [&] { return layer_selection(smoke); }},
      {"pose overfit on 20 examples", [&] { return pose_overfit(smoke); }},
      {"fusion translation error <= RGB baseline", [&] { return cross_condition(smoke); }},
      {"subcommand reports reproducible", [&] { return determinism(work); }},
      {"quaternion angle properties", quaternion_metric},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    if (!only.empty() && id >= 6 && id <= 8 && !smoke.trained &&
        std::find(only.begin(), only.end(), 5) == only.end())
      smoke_gan(smoke, true);
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool known = std::find(known_failures.begin(), known_failures.end(), id) != known_failures.end();
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[i].first << " -- " << v.detail
              << " [" << fmt("%.1f", secs) << " s]" << (!v.pass && known ? " (known failure)" : "") << std::endl;
    failed += !v.pass && !known;
  }
  if (!known_failures.empty()) {
    std::cout << "known failures excluded from the exit status:";
    for (int id : known_failures) std::cout << ' ' << id;
    std::cout << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
