#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "invloc/fusion.hpp"
#include "invloc/layer_analysis.hpp"
#include "invloc/ssim.hpp"
#include "oracles.hpp"

using namespace invloc;
using invloc::testing::brute_force_pr;
using invloc::testing::random_map;
using invloc::testing::reference_ssim;
using invloc::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Generator small_generator(int size) {
  GeneratorSpec spec;
  spec.image_size = size;
  spec.base_channels = 4;
  torch::manual_seed(5);
  return Generator(spec);
}

ImageTensor noise_image(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  ImageTensor img(size, size, 3);
  for (auto& v : img.data) v = u(rng);
  return img;
}

// Smooth structured map with a per-frame pattern, so SSIM separates frames.
FusionMap pattern_map(int frame, int size, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, noise);
  FusionMap m;
  m.height = m.width = size;
  m.source_frame = frame;
  m.data.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      m.data[static_cast<std::size_t>(y) * size + x] =
          static_cast<float>(std::sin(0.3 * (frame + 1) * x) * std::cos(0.2 * (frame + 2) * y) + n(rng));
  return m;
}

FusionMap scaled(FusionMap m, float alpha) {
  for (auto& v : m.data) v *= alpha;
  return m;
}

}  // namespace

TEST(Fuse, SingleChannelIsIdentity) {
  const auto act = torch::rand({1, 5, 7});
  const auto m = fuse(act);
  ASSERT_EQ(m.height, 5);
  ASSERT_EQ(m.width, 7);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) EXPECT_EQ(m.at(y, x), act[0][y][x].item<float>());
}

TEST(Fuse, ConstantChannelsAdd) {
  const auto m = fuse(torch::full({2, 3, 3}, 0.5f));
  for (float v : m.data) EXPECT_FLOAT_EQ(v, 1.0f);
  const auto mean = fuse(torch::full({2, 3, 3}, 0.5f), FusionMode::mean);
  for (float v : mean.data) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Fuse, MatchesElementwiseChannelSum) {
  torch::manual_seed(3);
  const auto act = torch::randn({3, 4, 4});
  const auto m = fuse(act.unsqueeze(0));
  auto acc = act.accessor<float, 3>();
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      double s = 0;
      for (int c = 0; c < 3; ++c) s += acc[c][y][x];
      EXPECT_NEAR(m.at(y, x), s, 1e-6);
    }
}

TEST(Fuse, IsLinearInScale) {
  torch::manual_seed(4);
  const auto act = torch::randn({16, 6, 6});
  const auto base = fuse(act);
  for (float alpha : {-2.0f, 0.25f, 7.5f}) {
    const auto m = fuse(act * alpha);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m.data[i], alpha * base.data[i], 1e-5 * (1 + std::abs(m.data[i])));
  }
}

TEST(Extract, ShapesFollowTheLayerTable) {
  auto g = small_generator(256);
  const auto img = noise_image(256, 1);
  const auto conv3 = extract(g, img, "Conv3");
  EXPECT_EQ(conv3.height, 64);
  EXPECT_EQ(conv3.width, 64);
  EXPECT_EQ(conv3.source_layer, "Conv3");
  const auto conv1 = extract(g, img, "Conv1");
  EXPECT_EQ(conv1.height, 256);
  EXPECT_EQ(conv1.width, 256);
  const auto again = extract(g, img, "Conv3");
  EXPECT_EQ(again.data, conv3.data);
  EXPECT_THROW(extract(g, img, "Pool5"), Error);
}

TEST(MapFile, RoundTripAndCorruption) {
  TempDir dir("mapfile");
  const std::vector<float> values = {1.5f, -2.0f, 3.25f, 0.0f, 1e-8f, 7.0f};
  write_map_file(dir / "m.fmap", 2, 3, values);
  const auto back = read_map_file(dir / "m.fmap");
  EXPECT_EQ(back.height, 2u);
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.values, values);

  std::string bytes;
  {
    std::ifstream in(dir / "m.fmap", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& b) {
    std::ofstream(dir / name, std::ios::binary) << b;
    return dir / name;
  };
  EXPECT_THROW(read_map_file(write("trunc.fmap", bytes.substr(0, bytes.size() - 2))), Error);
  EXPECT_THROW(read_map_file(write("tail.fmap", bytes + "x")), Error);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(read_map_file(write("magic.fmap", bad)), Error);
}

TEST(Cache, StoreLoadAndMiss) {
  TempDir dir("cache");
  FusionCache cache(dir.path(), "abc123");
  std::mt19937_64 rng(1);
  auto m = random_map(rng, 5, 4);
  m.source_layer = "Res2";
  m.source_frame = 17;
  m.source_checkpoint = "abc123";
  EXPECT_FALSE(cache.load("Res2", "winter", 17).has_value());
  cache.store(m, "winter");
  EXPECT_TRUE(fs::exists(cache.entry_path("Res2", "winter", 17)));
  const auto back = cache.load("Res2", "winter", 17);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->data, m.data);
  EXPECT_EQ(back->source_frame, 17);
  EXPECT_EQ(back->source_layer, "Res2");
  FusionCache other(dir.path(), "def456");
  EXPECT_FALSE(other.load("Res2", "winter", 17).has_value());
}

TEST(Cache, ExtractLayersUsesCacheTransparently) {
  TempDir dir("xcache");
  auto g = small_generator(32);
  const auto a = noise_image(32, 2), b = noise_image(32, 3);
  const std::vector<FrameRef> frames = {{&a, 4, "summer"}, {&b, 9, "summer"}};
  const std::vector<std::string> layers = {"Conv1", "Conv3", "Res9"};
  FusionCache cache(dir.path(), "h1");
  const auto direct = extract_layers(g, frames, layers, "h1");
  const auto first = extract_layers(g, frames, layers, "h1", &cache);
  EXPECT_TRUE(fs::exists(cache.entry_path("Res9", "summer", 9)));
  const auto cached = extract_layers(g, frames, layers, "h1", &cache);
  for (const auto& l : layers)
    for (std::size_t i = 0; i < frames.size(); ++i) {
      EXPECT_EQ(direct.at(l)[i].data, first.at(l)[i].data);
      EXPECT_EQ(direct.at(l)[i].data, cached.at(l)[i].data);
      EXPECT_EQ(cached.at(l)[i].source_frame, frames[i].frame);
    }
}

TEST(Ssim, GaussianWindowAndShrinking) {
  const auto w = gaussian_window(11, 1.5);
  ASSERT_EQ(w.size(), 11u);
  double s = 0;
  for (double v : w) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(w[0], w[10]);
  EXPECT_GT(w[5], w[4]);
  EXPECT_EQ(effective_window(64, 64, 11), 11);
  EXPECT_EQ(effective_window(8, 8, 11), 7);
  EXPECT_EQ(effective_window(6, 9, 11), 5);
}

TEST(Ssim, MatchesReferenceOnRandomPairs) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 40; ++t) {
    const auto a = random_map(rng, 16, 16), b = random_map(rng, 16, 16);
    EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-6);
  }
  // correlated pair and a map smaller than the window
  const auto a = random_map(rng, 16, 16);
  auto b = a;
  for (auto& v : b.data) v = 0.7f * v + 0.2f;
  EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-6);
  const auto c = random_map(rng, 8, 9), d = random_map(rng, 8, 9);
  EXPECT_NEAR(ssim(c, d), reference_ssim(c, d), 1e-6);
}

TEST(Ssim, SelfSimilarityAndSymmetry) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    const auto a = random_map(rng, 20, 13), b = random_map(rng, 20, 13);
    EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
    EXPECT_LT(std::abs(ssim(a, b) - ssim(b, a)), 1e-9);
    const double v = ssim(a, b);
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Ssim, AnticorrelatedMapIsNegative) {
  // locally zero-mean: a checkerboard under a smooth positive envelope
  FusionMap x;
  x.height = x.width = 24;
  for (int y = 0; y < 24; ++y)
    for (int c = 0; c < 24; ++c) x.data.push_back(static_cast<float>(((y + c) % 2 ? -1 : 1) * (1.2 + std::sin(0.4 * c))));
  auto neg = scaled(x, -1.0f);
  EXPECT_LT(ssim(x, neg), 0.0);
}

TEST(Ssim, OperandFormAgreesWithDirectCall) {
  std::mt19937_64 rng(9);
  const auto a = random_map(rng, 30, 30), b = random_map(rng, 30, 30);
  EXPECT_DOUBLE_EQ(ssim(SsimOperand(a), SsimOperand(b)), ssim(a, b));
}

TEST(Ssim, RejectsBadInput) {
  std::mt19937_64 rng(10);
  const auto a = random_map(rng, 16, 16), b = random_map(rng, 16, 15);
  EXPECT_THROW(ssim(a, b), Error);
  auto n = a;
  n.data[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(ssim(a, n), Error);
  SsimOptions other;
  other.sigma = 2.0;
  EXPECT_THROW(ssim(SsimOperand(a), SsimOperand(a, other)), Error);
}

TEST(LayerAnalysis, IdenticalSetsScorePerfectly) {
  std::mt19937_64 rng(11);
  std::vector<FusionMap> maps;
  for (int f = 0; f < 5; ++f) maps.push_back(random_map(rng, 16, 16));
  for (int f = 0; f < 5; ++f) maps[f].source_frame = f;
  const auto gt = identity_correspondences({0, 1, 2, 3, 4});
  const auto an = analyze_layer_maps({"Conv2", "Res5"}, {maps, maps}, {maps, maps}, gt);
  ASSERT_EQ(an.layers.size(), 2u);
  for (const auto& s : an.layers) {
    EXPECT_DOUBLE_EQ(s.f1, 1.0);
    EXPECT_LT(s.threshold, 1.0 + 1e-9);
    EXPECT_GT(s.threshold, 0.2);
  }
  EXPECT_EQ(an.selected_layer, "Conv2");
}

TEST(LayerAnalysis, MatchesExhaustiveThresholdOracle) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<FusionMap> q, db;
    for (int f = 0; f < 3; ++f) {
      q.push_back(pattern_map(f, 16, 0.8, rng));
      db.push_back(pattern_map(trial % 2 ? 2 - f : f, 16, 0.8, rng));
      db.back().source_frame = f;
    }
    const auto gt = identity_correspondences({0, 1, 2});
    const auto an = analyze_layer_maps({"Conv3"}, {q}, {db}, gt);

    std::vector<float> scores;
    std::vector<std::uint8_t> truth;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        scores.push_back(static_cast<float>(reference_ssim(q[i], db[j])));
        truth.push_back(i == j);
      }
    double best = 0.0;
    for (float t : scores) {
      const auto c = brute_force_pr(scores, truth, t);
      const double p = c.precision(), r = c.recall();
      if (p + r > 0) best = std::max(best, 2 * p * r / (p + r));
    }
    EXPECT_NEAR(an.f1_of("Conv3"), best, 1e-12) << "trial " << trial;
  }
}

TEST(LayerAnalysis, InvariantToPositiveRescaleOfOneLayer) {
  std::mt19937_64 rng(13);
  std::vector<FusionMap> q, db;
  for (int f = 0; f < 6; ++f) {
    q.push_back(pattern_map(f, 20, 1.0, rng));
    db.push_back(pattern_map(f, 20, 1.0, rng));
  }
  const auto gt = identity_correspondences({0, 1, 2, 3, 4, 5});
  const double base = analyze_layer_maps({"Res1"}, {q}, {db}, gt).f1_of("Res1");
  for (float alpha : {4.0f, 0.125f, 3.7f}) {
    std::vector<FusionMap> qs, ds;
    for (const auto& m : q) qs.push_back(scaled(m, alpha));
    for (const auto& m : db) ds.push_back(scaled(m, alpha));
    EXPECT_NEAR(analyze_layer_maps({"Res1"}, {qs}, {ds}, gt).f1_of("Res1"), base, 1e-12) << alpha;
  }
}

TEST(LayerAnalysis, SelectionRule) {
  LayerAnalysis a;
  a.layers = {{"Conv1", 0.2, 0.5}, {"Conv3", 0.9, 0.5}};
  EXPECT_EQ(select_layer(a), "Conv3");
  a.layers = {{"Conv3", 0.8, 0.5}, {"Conv2", 0.8, 0.5}};
  EXPECT_EQ(select_layer(a), "Conv2");
  EXPECT_THROW(select_layer(LayerAnalysis{}), Error);
  EXPECT_THROW(analyze_layer_maps({}, {}, {}, identity_correspondences({0})), Error);
}

TEST(LayerAnalysis, EndToEndWithGeneratorAndReport) {
  TempDir dir("layers");
  auto g = small_generator(32);
  std::vector<ImageTensor> imgs;
  for (int f = 0; f < 4; ++f) imgs.push_back(noise_image(32, 100 + f));
  std::vector<FrameRef> q, db;
  for (int f = 0; f < 4; ++f) {
    q.push_back({&imgs[f], f, "summer"});
    db.push_back({&imgs[f], f, "winter"});
  }
  const auto gt = identity_correspondences({0, 1, 2, 3});
  EXPECT_THROW(layer_f1_analysis(g, "h", q, db, gt, {}), Error);
  const auto an = layer_f1_analysis(g, "h", q, db, gt, {"Conv1", "Conv2", "Conv3"});
  for (const auto& s : an.layers) {
    EXPECT_DOUBLE_EQ(s.f1, 1.0);
    EXPECT_GE(s.f1, 0.0);
  }
  EXPECT_EQ(an.selected_layer, "Conv1");
  write_layer_report(an, dir / "layers.csv", dir / "layers.png");
  std::ifstream in(dir / "layers.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "layer,f1");
  EXPECT_EQ(row.rfind("Conv1,", 0), 0u);
  EXPECT_GT(fs::file_size(dir / "layers.png"), 0u);
}
