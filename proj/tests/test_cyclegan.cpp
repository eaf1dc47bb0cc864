#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "invloc/adam.hpp"
#include "invloc/cyclegan.hpp"
#include "invloc/gan_losses.hpp"
#include "invloc/generator.hpp"
#include "invloc/synthetic.hpp"
#include "oracles.hpp"

using namespace invloc;
using invloc::testing::max_relative_error;
using invloc::testing::numeric_gradient;
using invloc::testing::TempDir;
namespace fs = std::filesystem;

namespace {

// Output dimensionality of every generator layer for a 256x256 RGB input,
// as printed in the architecture table.
const std::map<std::string, TapShape> kPrintedShapes = {
    {"Conv1", {256, 256, 64}},  {"Conv2", {128, 128, 128}}, {"Conv3", {64, 64, 256}},  {"Res1", {64, 64, 256}},
    {"Res2", {64, 64, 256}},    {"Res3", {64, 64, 256}},    {"Res4", {64, 64, 256}},   {"Res5", {64, 64, 256}},
    {"Res6", {64, 64, 256}},    {"Res7", {64, 64, 256}},    {"Res8", {64, 64, 256}},   {"Res9", {64, 64, 256}},
    {"Uconv1", {64, 64, 256}},  {"Uconv2", {128, 128, 128}}, {"Uconv3", {256, 256, 3}},
};

GeneratorSpec mini_generator() {
  GeneratorSpec s;
  s.image_size = 8;
  s.base_channels = 2;
  s.init_std = 0.3;  // large enough that the loss is not flat
  return s;
}

DiscriminatorSpec mini_discriminator() {
  DiscriminatorSpec s;
  s.base_channels = 2;
  s.layers = 1;
  s.init_std = 0.3;
  return s;
}

torch::Tensor random_images(std::int64_t n, int size, std::uint64_t seed) {
  torch::manual_seed(seed);
  return torch::rand({n, 3, size, size}, torch::kFloat64) * 2 - 1;
}

// A handful of entries of `param`, checked by central differences.
void check_param_gradient(torch::Tensor param, const std::function<torch::Tensor()>& loss, int samples,
                          std::uint64_t seed, invloc::testing::FdStats& stats) {
  auto l = loss();
  auto grads = torch::autograd::grad({l}, {param})[0];
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> pick(0, param.numel() - 1);
  torch::NoGradGuard no_grad;
  auto flat = param.view({-1});
  for (int s = 0; s < samples; ++s) {
    const std::int64_t i = pick(rng);
    const double orig = flat[i].item<double>();
    const double eps = 1e-6;
    flat[i] = orig + eps;
    const double up = loss().item<double>();
    flat[i] = orig - eps;
    const double down = loss().item<double>();
    flat[i] = orig;
    stats.add(grads.view({-1})[i].item<double>(), (up - down) / (2 * eps));
  }
}

DomainSplit tiny_split(int frames = 4) {
  auto synth = make_synthetic_seasons(3, frames, std::vector<std::string>{"summer", "winter"}, 64);
  auto ds = std::make_shared<const MultiDomainDataset>(std::move(synth.dataset));
  return split_domains(ds, {"summer"}, "winter");
}

CycleGanSpec tiny_spec() {
  CycleGanSpec spec;
  spec.generator.image_size = 64;
  spec.generator.base_channels = 4;
  spec.discriminator.base_channels = 4;
  return spec;
}

GanTrainConfig tiny_config(std::int64_t iters) {
  GanTrainConfig c;
  c.image_size = 64;
  c.max_iters = iters;
  c.checkpoint_every = 2;
  c.seed = 11;
  return c;
}

bool same_parameters(torch::nn::Module& a, torch::nn::Module& b) {
  auto pa = a.named_parameters();
  auto pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!torch::equal(pa[i].value(), pb[i].value())) return false;
  return true;
}

}  // namespace

TEST(Generator, CatalogHasFifteenLayersInOrder) {
  const auto names = generator_layer_names();
  ASSERT_EQ(names.size(), 15u);
  EXPECT_EQ(names.front(), "Conv1");
  EXPECT_EQ(names[3], "Res1");
  EXPECT_EQ(names.back(), "Uconv3");
  EXPECT_EQ(generator_layer_index("Conv3"), 2);
  EXPECT_EQ(generator_layer_index("Conv4"), -1);
}

TEST(Generator, TapShapesMatchPrintedTable) {
  GeneratorSpec spec;  // 256 input, 64 base channels
  Generator g(spec);
  ImageTensor img(256, 256, 3, 0.1f);
  std::set<std::string> all;
  for (const auto& n : generator_layer_names()) all.insert(n);
  const auto out = generator_forward(g, img, all);
  ASSERT_EQ(out.taps.size(), 15u);
  for (const auto& [name, shape] : kPrintedShapes) {
    const auto& t = out.taps.at(name);
    EXPECT_EQ(t.size(0), shape.channels) << name;
    EXPECT_EQ(t.size(1), shape.height) << name;
    EXPECT_EQ(t.size(2), shape.width) << name;
    EXPECT_EQ(expected_tap_shape(spec, name), shape) << name;
  }
  EXPECT_EQ(out.image.height, 256);
  EXPECT_EQ(out.image.channels, 3);
}

TEST(Generator, OutputIsBoundedAndInputChecked) {
  Generator g(mini_generator());
  auto y = g->forward(random_images(2, 8, 1).to(torch::kFloat32));
  EXPECT_LE(y.abs().max().item<double>(), 1.0);
  EXPECT_THROW(g->forward(torch::zeros({1, 3, 12, 12})), Error);
  EXPECT_THROW(g->activations(torch::zeros({1, 3, 8, 8}), {"Conv9"}), Error);
}

TEST(Generator, ActivationsEqualFullPassTaps) {
  Generator g(mini_generator());
  torch::NoGradGuard no_grad;
  const auto x = random_images(1, 8, 2).to(torch::kFloat32);
  std::map<std::string, torch::Tensor> rec;
  g->forward_with_taps(x, {"Conv3", "Res4"}, rec);
  const auto acts = g->activations(x, {"Conv3", "Res4"});
  EXPECT_TRUE(torch::equal(acts.at("Conv3"), rec.at("Conv3")));
  EXPECT_TRUE(torch::equal(acts.at("Res4"), rec.at("Res4")));
}

TEST(Discriminator, PatchOutputSize) {
  Discriminator d(DiscriminatorSpec{});
  torch::NoGradGuard no_grad;
  const auto y = d->forward(torch::zeros({1, 3, 256, 256}));
  EXPECT_EQ(y.size(1), 1);
  EXPECT_EQ(y.size(2), 30);  // 70x70 receptive fields on a 256 input
}

TEST(Losses, CycleLossOfIdentityIsZero) {
  const auto a = random_images(2, 8, 3), b = random_images(2, 8, 4);
  TensorMap id = [](const torch::Tensor& x) { return x; };
  EXPECT_DOUBLE_EQ(cycle_loss(id, id, a, b).item<double>(), 0.0);
  TensorMap shift = [](const torch::Tensor& x) { return x + 0.25; };
  // two shifts per round trip, both directions
  EXPECT_NEAR(cycle_loss(shift, shift, a, b).item<double>(), 1.0, 1e-12);
  EXPECT_THROW(cycle_loss(id, id, a, random_images(1, 4, 5)), Error);
}

TEST(Losses, AdversarialFormsMatchHandValues) {
  const auto real = random_images(1, 8, 6), src = random_images(1, 8, 7);
  TensorMap gen = [](const torch::Tensor& x) { return x; };
  // constant discriminator scores: real -> logit(0.8), fake -> logit(0.3)
  TensorMap disc = [&](const torch::Tensor& x) {
    const double p = torch::equal(x, real) ? 0.8 : 0.3;
    return torch::full({1, 1, 2, 2}, std::log(p / (1 - p)), torch::kFloat64);
  };
  const auto log_form = adversarial_losses(gen, disc, real, src, LossForm::log);
  EXPECT_NEAR(log_form.generator.item<double>(), -std::log(0.3), 1e-12);
  EXPECT_NEAR(log_form.discriminator.item<double>(), -(std::log(0.8) + std::log(0.7)), 1e-12);
  EXPECT_NEAR(log_form.objective.item<double>(), std::log(0.8) + std::log(0.7), 1e-12);

  TensorMap raw = [&](const torch::Tensor& x) {
    return torch::full({1, 1, 2, 2}, torch::equal(x, real) ? 0.9 : 0.2, torch::kFloat64);
  };
  const auto ls = adversarial_losses(gen, raw, real, src, LossForm::least_squares);
  EXPECT_NEAR(ls.generator.item<double>(), 0.64, 1e-12);
  EXPECT_NEAR(ls.discriminator.item<double>(), 0.01 + 0.04, 1e-12);
}

TEST(Losses, LogClampKeepsLossFinite) {
  const std::size_t before = log_clamp_count();
  const auto d_real = torch::full({1, 1, 2, 2}, -1e4, torch::kFloat64);
  const auto d_fake = torch::full({1, 1, 2, 2}, 1e4, torch::kFloat64);
  EXPECT_TRUE(std::isfinite(discriminator_loss(d_real, d_fake, LossForm::log).item<double>()));
  EXPECT_GT(log_clamp_count(), before);
  const auto nan = torch::full({1, 1, 2, 2}, std::nan(""), torch::kFloat64);
  TensorMap id = [](const torch::Tensor& x) { return x; };
  TensorMap bad = [&](const torch::Tensor&) { return nan; };
  EXPECT_THROW(adversarial_losses(id, bad, d_real, d_real, LossForm::log), Error);
}

TEST(Losses, ObjectiveCombination) {
  EXPECT_DOUBLE_EQ(total_objective({-1.0, -2.0, 0.5}, 20.0), 7.0);
  EXPECT_EQ(parse_loss_form("least_squares"), LossForm::least_squares);
  EXPECT_THROW(parse_loss_form("hinge"), Error);
}

TEST(Gradients, CycleLossMatchesFiniteDifferences) {
  Generator g_ab(mini_generator()), g_ba(mini_generator());
  g_ab->to(torch::kFloat64);
  g_ba->to(torch::kFloat64);
  const auto a = random_images(1, 8, 8), b = random_images(1, 8, 9);
  TensorMap fab = [&](const torch::Tensor& x) { return g_ab->forward(x); };
  TensorMap fba = [&](const torch::Tensor& x) { return g_ba->forward(x); };
  auto loss = [&] { return cycle_loss(fab, fba, a, b); };
  invloc::testing::FdStats stats;
  int k = 0;
  for (auto& p : g_ab->named_parameters()) check_param_gradient(p.value(), loss, 3, 100 + k++, stats);
  EXPECT_TRUE(stats.ok(1e-4)) << stats.max_relative << " / " << stats.max_absolute_tiny;
  EXPECT_GT(stats.checked - stats.tiny, stats.checked / 2);
  // input gradient as well
  auto x = a.clone().requires_grad_(true);
  auto l = cycle_loss(fab, fba, x, b);
  auto analytic = torch::autograd::grad({l}, {x})[0];
  auto numeric = numeric_gradient([&](const torch::Tensor& t) { return cycle_loss(fab, fba, t, b).item<double>(); }, a);
  EXPECT_LT(max_relative_error(analytic, numeric), 1e-4);
}

class AdversarialGradients : public ::testing::TestWithParam<LossForm> {};

TEST_P(AdversarialGradients, MatchFiniteDifferences) {
  Generator g(mini_generator());
  Discriminator d(mini_discriminator());
  g->to(torch::kFloat64);
  d->to(torch::kFloat64);
  const auto real = random_images(1, 8, 10), src = random_images(1, 8, 11);
  TensorMap fg = [&](const torch::Tensor& x) { return g->forward(x); };
  TensorMap fd = [&](const torch::Tensor& x) { return d->forward(x); };
  auto gen_loss = [&] { return adversarial_losses(fg, fd, real, src, GetParam()).generator; };
  auto disc_loss = [&] { return adversarial_losses(fg, fd, real, src, GetParam()).discriminator; };
  invloc::testing::FdStats stats;
  int k = 0;
  for (auto& p : d->named_parameters()) {
    check_param_gradient(p.value(), disc_loss, 3, 200 + k, stats);
    check_param_gradient(p.value(), gen_loss, 3, 300 + k, stats);
    ++k;
  }
  for (auto& p : g->named_parameters()) check_param_gradient(p.value(), gen_loss, 3, 400 + k++, stats);
  EXPECT_TRUE(stats.ok(1e-4)) << stats.max_relative << " / " << stats.max_absolute_tiny;
  EXPECT_GT(stats.checked - stats.tiny, stats.checked / 2);
}

INSTANTIATE_TEST_SUITE_P(BothForms, AdversarialGradients, ::testing::Values(LossForm::log, LossForm::least_squares));

TEST(AdamOptimizer, MatchesClosedFormSteps) {
  auto w = torch::tensor({1.0, -2.0}, torch::kFloat64).requires_grad_(true);
  Adam opt({{"w", w}}, {0.1, 0.9, 0.999, 1e-10});
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
  for (int t = 1; t <= 3; ++t) {
    opt.zero_grad();
    auto loss = (w * w).sum() * 0.5 + w.sum();  // grad = w + 1
    loss.backward();
    opt.step();
    for (int i = 0; i < 2; ++i) {
      const double g = ref[i] + 1.0;
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-10);
    }
  }
  EXPECT_NEAR(w[0].item<double>(), ref[0], 1e-12);
  EXPECT_NEAR(w[1].item<double>(), ref[1], 1e-12);
  EXPECT_EQ(opt.step_count(), 3);
  EXPECT_EQ(opt.state().size(), 2u);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  TempDir dir("ckpt");
  Checkpoint c = init_checkpoint(tiny_spec(), tiny_config(0));
  c.iteration = 5;
  c.history.push_back({0, 1.5, -1.0, -1.2, 0.2});
  save_checkpoint(c, dir / "c.bin");
  Checkpoint d = load_checkpoint(dir / "c.bin");
  EXPECT_EQ(d.iteration, 5);
  EXPECT_EQ(d.feature_hash(), c.feature_hash());
  EXPECT_TRUE(same_parameters(*c.model.d_b, *d.model.d_b));
  EXPECT_EQ(d.spec.generator.base_channels, 4);
  EXPECT_EQ(d.config.seed, 11u);
}

TEST(Checkpoint, InitIsSeeded) {
  Checkpoint a = init_checkpoint(tiny_spec(), tiny_config(0));
  Checkpoint b = init_checkpoint(tiny_spec(), tiny_config(0));
  GanTrainConfig other = tiny_config(0);
  other.seed = 12;
  Checkpoint c = init_checkpoint(tiny_spec(), other);
  EXPECT_EQ(a.feature_hash(), b.feature_hash());
  EXPECT_NE(a.feature_hash(), c.feature_hash());
}

TEST(Training, WritesLogAndCheckpoints) {
  TempDir dir("train");
  const auto split = tiny_split();
  std::vector<LossRecord> seen;
  Checkpoint c = train_cyclegan(tiny_config(4), tiny_spec(), split, dir.path(),
                                [&](const LossRecord& r) { seen.push_back(r); });
  EXPECT_EQ(c.iteration, 4);
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(dir / "checkpoint_latest.bin"));
  const auto log = read_loss_log(dir / "loss.csv");
  ASSERT_EQ(log.size(), 4u);
  for (const auto& r : log) {
    EXPECT_TRUE(std::isfinite(r.total));
    EXPECT_NEAR(r.total, total_objective({r.gan_ab, r.gan_ba, r.cycle}, 20.0), 1e-6 * std::max(1.0, std::abs(r.total)));
  }
}

TEST(Training, ResumeReproducesUninterruptedRun) {
  TempDir straight("straight"), split_dir("resumed");
  const auto split = tiny_split();
  Checkpoint full = train_cyclegan(tiny_config(4), tiny_spec(), split, straight.path());
  train_cyclegan(tiny_config(2), tiny_spec(), split, split_dir.path());
  Checkpoint half = load_checkpoint(split_dir / "checkpoint.bin");
  Checkpoint resumed = resume_cyclegan(std::move(half), split, split_dir.path(), 4);
  EXPECT_EQ(resumed.iteration, 4);
  EXPECT_EQ(resumed.feature_hash(), full.feature_hash());
  EXPECT_TRUE(same_parameters(*resumed.model.d_a, *full.model.d_a));
  EXPECT_EQ(read_loss_log(split_dir / "loss.csv").size(), 4u);
}

TEST(Training, NonFiniteLossAbortsAndKeepsLastCheckpoint) {
  TempDir dir("nan");
  const auto split = tiny_split();
  GanTrainConfig cfg = tiny_config(3);  // periodic save at 2, final at 3
  train_cyclegan(cfg, tiny_spec(), split, dir.path());
  Checkpoint c = load_checkpoint(dir / "checkpoint.bin");
  const std::string before = load_checkpoint(dir / "checkpoint_latest.bin").feature_hash();
  c.config.lr = 1e30;
  c.config.checkpoint_every = 1000;
  EXPECT_THROW(resume_cyclegan(std::move(c), split, dir.path(), 50), Error);
  EXPECT_EQ(load_checkpoint(dir / "checkpoint_latest.bin").feature_hash(), before);
}

TEST(Training, RejectsMismatchedImageSize) {
  TempDir dir("bad");
  auto synth = make_synthetic_seasons(3, 3, std::vector<std::string>{"summer", "winter"}, 128);
  auto ds = std::make_shared<const MultiDomainDataset>(std::move(synth.dataset));
  const auto split = split_domains(ds, {"summer"}, "winter");
  EXPECT_THROW(train_cyclegan(tiny_config(1), tiny_spec(), split, dir.path()), Error);
}

TEST(Losses, HandValuesForSpecialDiscriminators) {
  const auto zero = torch::zeros({1, 1, 3, 3}, torch::kFloat64);  // sigmoid(0) = 0.5
  EXPECT_NEAR(discriminator_loss(zero, zero, LossForm::log).item<double>(), -2 * std::log(0.5), 1e-12);
  const auto one = torch::ones({1, 1, 3, 3}, torch::kFloat64);
  EXPECT_DOUBLE_EQ(discriminator_loss(one, zero, LossForm::least_squares).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(generator_adversarial_loss(one, LossForm::least_squares).item<double>(), 0.0);
}

TEST(Losses, InverseShiftPairHasZeroCycleLoss) {
  const auto a = random_images(2, 8, 12), b = random_images(2, 8, 13);
  TensorMap up = [](const torch::Tensor& x) { return x + 0.3; };
  TensorMap down = [](const torch::Tensor& x) { return x - 0.3; };
  EXPECT_NEAR(cycle_loss(up, down, a, b).item<double>(), 0.0, 1e-15);
}

TEST(Losses, ObjectiveIsLinearInCycleWeight) {
  EXPECT_DOUBLE_EQ(total_objective({1.0, 1.0, 0.5}, 20.0), 12.0);
  EXPECT_DOUBLE_EQ(total_objective({1.0, 1.0, 0.5}, 0.0), 2.0);
  const ObjectiveTerms t{-0.7, 0.2, 1.3};
  EXPECT_NEAR(total_objective(t, 30.0) - total_objective(t, 10.0), 20.0 * 1.3, 1e-12);
}

TEST(Training, ZeroIterationsGiveInitialCheckpoint) {
  TempDir dir("zero");
  const auto split = tiny_split();
  Checkpoint c = train_cyclegan(tiny_config(0), tiny_spec(), split, dir.path());
  EXPECT_EQ(c.iteration, 0);
  EXPECT_EQ(c.feature_hash(), init_checkpoint(tiny_spec(), tiny_config(0)).feature_hash());
  EXPECT_TRUE(read_loss_log(dir / "loss.csv").empty());
}

TEST(Training, SameSeedGivesSameLossLog) {
  TempDir a("det_a"), b("det_b");
  const auto split = tiny_split();
  train_cyclegan(tiny_config(10), tiny_spec(), split, a.path());
  train_cyclegan(tiny_config(10), tiny_spec(), split, b.path());
  const auto la = read_loss_log(a / "loss.csv"), lb = read_loss_log(b / "loss.csv");
  ASSERT_EQ(la.size(), 10u);
  ASSERT_EQ(lb.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(la[i].total, lb[i].total);
    EXPECT_EQ(la[i].cycle, lb[i].cycle);
  }
}

TEST(Training, UnwritableOutputIsFatalBeforeTraining) {
  TempDir dir("unwritable");
  std::ofstream(dir / "file") << "x";
  std::size_t seen = 0;
  EXPECT_THROW(train_cyclegan(tiny_config(3), tiny_spec(), tiny_split(), dir / "file" / "sub",
                              [&](const LossRecord&) { ++seen; }),
               Error);
  EXPECT_EQ(seen, 0u);
}

TEST(Checkpoint, ReloadGivesIdenticalForwardOutput) {
  TempDir dir("fwd");
  Checkpoint c = train_cyclegan(tiny_config(2), tiny_spec(), tiny_split(), dir.path());
  Checkpoint d = load_checkpoint(dir / "checkpoint.bin");
  torch::NoGradGuard ng;
  const auto x = random_images(1, 64, 14).to(torch::kFloat32);
  EXPECT_TRUE(torch::equal(c.model.g_ab->forward(x), d.model.g_ab->forward(x)));
  EXPECT_TRUE(torch::equal(c.model.g_ba->forward(x), d.model.g_ba->forward(x)));
  EXPECT_EQ(d.history.size(), 2u);
}

TEST(ObjectiveEval, SingleImageDomainsMatchDirectComputation) {
  auto split = tiny_split(2);
  for (auto& d : split.domain_a) d.indices.resize(1);
  split.domain_a.resize(1);
  split.domain_b.indices.resize(1);
  Checkpoint c = init_checkpoint(tiny_spec(), tiny_config(0));
  auto& m = c.model;
  const auto a = to_tensor(split.image(split.pooled_a().front()));
  const auto b = to_tensor(split.image(split.domain_b.indices.front()));
  torch::NoGradGuard ng;
  const auto fb = m.g_ab->forward(a), fa = m.g_ba->forward(b);
  const double cyc =
      ((m.g_ba->forward(fb) - a).abs().mean() + (m.g_ab->forward(fa) - b).abs().mean()).item<double>();
  const double gab = -discriminator_loss(m.d_b->forward(b), m.d_b->forward(fb), c.config.loss_form).item<double>();
  const double gba = -discriminator_loss(m.d_a->forward(a), m.d_a->forward(fa), c.config.loss_form).item<double>();

  for (int n : {1, 3}) {
    const auto t = evaluate_objective(c, split, n, 5);
    EXPECT_NEAR(t.cycle, cyc, 1e-6);
    EXPECT_NEAR(t.gan_ab, gab, 1e-6);
    EXPECT_NEAR(t.gan_ba, gba, 1e-6);
  }
}

TEST(ObjectiveEval, DeterministicAndLeavesParametersAlone) {
  const auto split = tiny_split();
  Checkpoint c = init_checkpoint(tiny_spec(), tiny_config(0));
  const auto hash = c.feature_hash();
  const auto x = evaluate_objective(c, split, 6, 9);
  const auto y = evaluate_objective(c, split, 6, 9);
  EXPECT_EQ(x.cycle, y.cycle);
  EXPECT_EQ(x.gan_ab, y.gan_ab);
  EXPECT_EQ(x.gan_ba, y.gan_ba);
  EXPECT_EQ(c.feature_hash(), hash);
  EXPECT_THROW(evaluate_objective(c, split, 0, 9), Error);
}
