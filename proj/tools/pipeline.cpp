#include "pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "invloc/plot.hpp"
#include "invloc/synthetic.hpp"

namespace invloc {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class... Args>
void say(const CommandOptions& o, const char* format, Args... args) {
  if (!o.out) return;
  if constexpr (sizeof...(Args) == 0) {
    *o.out << format << std::flush;
  } else {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    *o.out << buf << std::flush;
  }
}

void write_json(const json& j, const fs::path& path) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

std::shared_ptr<const MultiDomainDataset> load_dataset(const PipelineConfig& c) {
  const fs::path root = c.dataset_root();
  if (!fs::is_directory(root))
    throw Error("dataset directory " + root.string() + " does not exist" +
                (c.dataset.synthetic ? " (run `invloc synth` first)" : ""));
  return std::make_shared<const MultiDomainDataset>(load_image_dir(root, c.dataset.layout, c.dataset.image_size));
}

namespace {

void require_condition(const MultiDomainDataset& d, const std::string& cond) {
  if (!d.has_condition(cond)) throw Error("condition '" + cond + "' is not in the dataset");
}

CorrespondenceSet load_gt(const PipelineConfig& c, const MultiDomainDataset& d) {
  fs::path path = c.dataset.correspondences;
  if (path.empty() && fs::exists(c.dataset_root() / "correspondences.csv")) path = c.dataset_root() / "correspondences.csv";
  if (!path.empty()) return load_correspondences(path, c.placerec.tolerance);
  std::set<FrameId> frames;
  for (const auto& img : d.images) frames.insert(img.frame);
  return identity_correspondences({frames.begin(), frames.end()}, c.placerec.tolerance);
}

PoseTrack load_poses(const PipelineConfig& c, const std::string& condition) {
  const fs::path per_condition = c.dataset_root() / ("poses_" + condition + ".csv");
  if (fs::exists(per_condition)) return load_pose_file(per_condition);
  const fs::path shared = c.dataset.poses.empty() ? c.dataset_root() / "poses.csv" : c.dataset.poses;
  if (!fs::exists(shared)) throw Error("no pose file for condition '" + condition + "' (looked for " + shared.string() + ")");
  return load_pose_file(shared);
}

Checkpoint load_gan(const PipelineConfig& c) {
  const fs::path path = c.gan_dir() / "checkpoint.bin";
  if (!fs::exists(path)) throw Error("missing GAN checkpoint " + path.string() + " (run `invloc train-features`)");
  return load_checkpoint(path);
}

std::string resolve_layer(const PipelineConfig& c) {
  if (c.features.layer != "auto") return c.features.layer;
  const fs::path path = c.features_dir() / "layers.json";
  if (!fs::exists(path)) throw Error("[features] layer = auto needs " + path.string() + " (run `invloc analyze-layers`)");
  std::ifstream in(path);
  return json::parse(in).at("selected_layer").get<std::string>();
}

std::vector<FrameRef> frame_refs(const MultiDomainDataset& d, const std::string& cond, int count, SubsetMode mode) {
  require_condition(d, cond);
  const auto idx = d.indices_of(cond);
  std::vector<FrameRef> refs;
  for (std::size_t p : select_subset(idx.size(), std::min<std::size_t>(idx.size(), static_cast<std::size_t>(count)), mode)) {
    const auto& img = d.images[idx[p]];
    refs.push_back({&img.image, img.frame, cond});
  }
  return refs;
}

std::optional<FusionCache> make_cache(const PipelineConfig& c, const std::string& hash) {
  if (!c.features.cache) return std::nullopt;
  return FusionCache(c.features_dir() / "cache", hash);
}

std::string pair_name(const std::string& q, const std::string& d) { return q + "__" + d; }

void write_matches_csv(const std::vector<QueryMatches>& report, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "query,rank,db,score,correct\n";
  char buf[128];
  for (const auto& q : report)
    for (std::size_t r = 0; r < q.ranked.size(); ++r) {
      std::snprintf(buf, sizeof(buf), "%lld,%zu,%lld,%.9g,%d\n", static_cast<long long>(q.query_id), r + 1,
                    static_cast<long long>(q.ranked[r].db_id), q.ranked[r].score, q.ranked[r].correct ? 1 : 0);
      out << buf;
    }
}

PairReport report_pair(const ScoreMatrix& m, const PipelineConfig& c, const std::string& q, const std::string& d,
                       const fs::path& dir, const FrameImageLookup& lookup) {
  const auto thresholds = c.placerec.thresholds.empty() ? std::nullopt : std::optional(c.placerec.thresholds);
  const PrCurve curve = pr_curve(m, thresholds);
  write_pr_csv(curve, dir / "pr.csv");
  plot_pr_curves({{q + " vs " + d, curve}}, "PR " + q + " vs " + d, dir / "pr.png");
  const auto report = match_report(m, std::min<std::size_t>(5, m.cols));
  write_matches_csv(report, dir / "matches.csv");
  if (lookup) write_match_grid(report, lookup, dir / "matches.png", static_cast<std::size_t>(c.placerec.grid_rows));
  return {q, d, curve.best_f1, curve.best_threshold, dir};
}

// interleaved: even frame positions train, odd ones evaluate
std::vector<std::size_t> split_positions(const MultiDomainDataset& d, const std::string& cond, PoseSplit split,
                                         bool train) {
  require_condition(d, cond);
  const auto idx = d.indices_of(cond);
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < idx.size(); ++p)
    if (split == PoseSplit::shared || (p % 2 == 0) == train) out.push_back(idx[p]);
  return out;
}

const Pose& pose_of(const std::map<std::string, PoseTrack>& tracks, const DatasetImage& img) {
  const Pose* p = tracks.at(img.condition).find(img.frame);
  if (!p) throw Error("no pose for frame " + std::to_string(img.frame) + " of condition '" + img.condition + "'");
  return *p;
}

struct PoseContext {
  std::shared_ptr<const MultiDomainDataset> dataset;
  std::map<std::string, PoseTrack> tracks;
  std::vector<std::size_t> train_fusion;  // train conditions
  std::vector<std::size_t> train_pooled;  // every condition except the evaluation one
  std::vector<std::size_t> eval;
};

PoseContext pose_context(const PipelineConfig& c) {
  PoseContext ctx;
  ctx.dataset = load_dataset(c);
  const auto& d = *ctx.dataset;
  for (const auto& cond : d.conditions()) ctx.tracks.emplace(cond, load_poses(c, cond));
  for (const auto& cond : c.pose.train_conditions) {
    auto part = split_positions(d, cond, c.pose.split, true);
    ctx.train_fusion.insert(ctx.train_fusion.end(), part.begin(), part.end());
  }
  for (const auto& cond : d.conditions()) {
    if (cond == c.pose.eval_condition) continue;
    auto part = split_positions(d, cond, c.pose.split, true);
    ctx.train_pooled.insert(ctx.train_pooled.end(), part.begin(), part.end());
  }
  ctx.eval = split_positions(d, c.pose.eval_condition, c.pose.split, false);
  if (ctx.eval.empty()) throw Error("no evaluation frames for condition '" + c.pose.eval_condition + "'");
  return ctx;
}

std::vector<std::string> pose_methods(const PipelineConfig& c) {
  if (!c.pose.baselines) return {"fusion"};
  return {"fusion", "rgb", "rgb_pooled"};
}

fs::path model_path(const PipelineConfig& c, const std::string& method, int repeat) {
  return c.pose_dir() / (method + "_r" + std::to_string(repeat) + ".bin");
}

std::vector<FusionMap> fusion_maps(const PipelineConfig& c, Checkpoint& ckpt, const std::string& layer,
                                   const MultiDomainDataset& d, const std::vector<std::size_t>& images) {
  const std::string hash = ckpt.feature_hash();
  auto cache = make_cache(c, hash);
  std::vector<FrameRef> refs;
  for (std::size_t i : images) refs.push_back({&d.images[i].image, d.images[i].frame, d.images[i].condition});
  return std::move(extract_layers(ckpt.model.g_ab, refs, {layer}, hash, cache ? &*cache : nullptr).at(layer));
}

}  // namespace

const MethodResult& PoseEvalResult::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.method == name) return m;
  throw Error("no pose evaluation for method '" + name + "'");
}

ObjectiveTrend objective_trend(const std::vector<LossRecord>& history, std::size_t window) {
  if (history.empty()) throw Error("objective trend of an empty loss log");
  ObjectiveTrend t;
  t.window = std::max<std::size_t>(1, std::min(window, history.size() / 2 > 0 ? history.size() / 2 : 1));
  for (std::size_t i = 0; i < t.window; ++i) {
    t.initial += history[i].total;
    t.final += history[history.size() - 1 - i].total;
  }
  t.initial /= static_cast<double>(t.window);
  t.final /= static_cast<double>(t.window);
  return t;
}

ObjectiveComparison compare_objective(const PipelineConfig& c, const Checkpoint& trained, const DomainSplit& split,
                                      int samples) {
  const GanTrainConfig train = c.gan_config();
  const std::uint64_t seed = substream_seed(c.seed, "gan.objective_eval");
  const Checkpoint fresh = init_checkpoint(c.cyclegan_spec(), train);
  ObjectiveComparison r;
  r.samples = samples;
  r.initial = total_objective(evaluate_objective(fresh, split, samples, seed), train.omega);
  r.final = total_objective(evaluate_objective(trained, split, samples, seed), train.omega);
  return r;
}

SynthResult cmd_synth(const PipelineConfig& c, const CommandOptions& o) {
  if (!c.dataset.synthetic) throw Error("synth needs [dataset] synthetic = true");
  const fs::path root = c.dataset_root();
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!o.force) throw Error("output " + root.string() + " exists and is not empty (use --force to overwrite)");
    fs::remove_all(root);
  }
  SyntheticDataset synth = make_synthetic_seasons(c.seed, c.dataset.frames, c.dataset.conditions, c.dataset.image_size);
  save_synthetic(synth, root);
  SynthResult r{root, dataset_digest(synth), synth.dataset.images.size()};
  write_json({{"digest", hex64(r.digest)},
              {"images", r.images},
              {"conditions", c.dataset.conditions},
              {"frames", c.dataset.frames},
              {"image_size", c.dataset.image_size},
              {"seed", c.seed}},
             c.output_dir / "synth.json");
  say(o, "synthetic dataset: %zu images, %zu conditions x %d frames at %dx%d -> %s (digest %s)\n", r.images,
      c.dataset.conditions.size(), c.dataset.frames, c.dataset.image_size, c.dataset.image_size, root.c_str(),
      hex64(r.digest).c_str());
  return r;
}

Checkpoint cmd_train_features(const PipelineConfig& c, const CommandOptions& o) {
  auto dataset = load_dataset(c);
  const DomainSplit split = split_domains(dataset, c.dataset.domain_a, c.dataset.domain_b);
  const fs::path dir = c.gan_dir();
  const GanTrainConfig train = c.gan_config();
  const std::int64_t report_every = std::max<std::int64_t>(1, train.max_iters / 20);
  TrainObserver observer = [&](const LossRecord& r) {
    if ((r.iter + 1) % report_every == 0)
      say(o, "iter %lld  total %.4f  gan_ab %.4f  gan_ba %.4f  cyc %.4f\n", static_cast<long long>(r.iter + 1),
          r.total, r.gan_ab, r.gan_ba, r.cycle);
  };

  Checkpoint ckpt;
  const fs::path latest = dir / "checkpoint_latest.bin";
  const fs::path final_path = dir / "checkpoint.bin";
  if (o.resume && (fs::exists(latest) || fs::exists(final_path))) {
    // the later of the two snapshots
    Checkpoint a = fs::exists(latest) ? load_checkpoint(latest) : Checkpoint{};
    Checkpoint b = fs::exists(final_path) ? load_checkpoint(final_path) : Checkpoint{};
    Checkpoint start = (!fs::exists(final_path) || (fs::exists(latest) && a.iteration > b.iteration)) ? std::move(a)
                                                                                                       : std::move(b);
    say(o, "resuming from iteration %lld\n", static_cast<long long>(start.iteration));
    ckpt = resume_cyclegan(std::move(start), split, dir, train.max_iters, observer);
  } else {
    if (o.resume) say(o, "no checkpoint to resume; training from scratch\n");
    ckpt = train_cyclegan(train, c.cyclegan_spec(), split, dir, observer);
  }

  const auto history = read_loss_log(dir / "loss.csv");
  if (!history.empty()) {
    PlotSeries total{"total", {}, {}, palette(0), false};
    PlotSeries cyc{"omega*l_cyc", {}, {}, palette(2), false};
    PlotSeries gan{"l_gan_ab+l_gan_ba", {}, {}, palette(1), false};
    for (const auto& r : history) {
      total.x.push_back(static_cast<double>(r.iter));
      total.y.push_back(r.total);
      cyc.x.push_back(static_cast<double>(r.iter));
      cyc.y.push_back(train.omega * r.cycle);
      gan.x.push_back(static_cast<double>(r.iter));
      gan.y.push_back(r.gan_ab + r.gan_ba);
    }
    PlotOptions po;
    po.title = "CycleGAN objective";
    po.x_label = "iteration";
    po.y_label = "loss";
    plot_lines({total, cyc, gan}, po, dir / "loss.png");
    const auto trend = objective_trend(history);
    const auto cmp = compare_objective(c, ckpt, split);
    write_json({{"iterations", ckpt.iteration},
                {"feature_hash", ckpt.feature_hash()},
                {"initial_objective", cmp.initial},
                {"final_objective", cmp.final},
                {"objective_eval_pairs", cmp.samples},
                {"log_initial_mean", trend.initial},
                {"log_final_mean", trend.final},
                {"trend_window", trend.window}},
               dir / "summary.json");
    say(o, "trained %lld iterations; objective on %d fixed pairs %.4f -> %.4f (log means %.4f -> %.4f)\n",
        static_cast<long long>(ckpt.iteration), cmp.samples, cmp.initial, cmp.final, trend.initial, trend.final);
  }
  return ckpt;
}

LayerAnalysis cmd_analyze_layers(const PipelineConfig& c, const CommandOptions& o) {
  Checkpoint ckpt = load_gan(c);
  auto dataset = load_dataset(c);
  const auto& f = c.features;
  const auto queries = frame_refs(*dataset, f.query_condition, f.frames, f.subset);
  const auto database = frame_refs(*dataset, f.db_condition, f.frames, f.subset);
  const auto layers = f.layers.empty() ? generator_layer_names() : f.layers;
  const std::string hash = ckpt.feature_hash();
  auto cache = make_cache(c, hash);
  LayerAnalysis a = layer_f1_analysis(ckpt.model.g_ab, hash, queries, database, load_gt(c, *dataset), layers,
                                      cache ? &*cache : nullptr);
  write_layer_report(a, c.features_dir() / "layers.csv", c.features_dir() / "layers.png");
  json layers_json = json::array();
  for (const auto& s : a.layers) layers_json.push_back({{"layer", s.layer}, {"f1", s.f1}, {"threshold", s.threshold}});
  write_json({{"checkpoint", hash},
              {"query_condition", f.query_condition},
              {"db_condition", f.db_condition},
              {"frames", queries.size()},
              {"layers", layers_json},
              {"selected_layer", a.selected_layer}},
             c.features_dir() / "layers.json");
  for (const auto& s : a.layers) say(o, "%-7s F1 %.4f\n", s.layer.c_str(), s.f1);
  say(o, "selected layer: %s\n", a.selected_layer.c_str());
  return a;
}

PlacerecResult cmd_placerec(const PipelineConfig& c, const CommandOptions& o) {
  auto dataset = load_dataset(c);
  const auto gt = load_gt(c, *dataset);
  const fs::path dir = c.placerec_dir();
  PlacerecResult result;

  auto lookup_for = [&](const std::string& q, const std::string& d) -> FrameImageLookup {
    return [&, q, d](bool is_query, FrameId frame) -> const ImageTensor* {
      const auto* img = dataset->find(is_query ? q : d, frame);
      return img ? &img->image : nullptr;
    };
  };

  const auto conditions = c.placerec.conditions.empty() ? c.dataset.conditions : c.placerec.conditions;
  if (conditions.size() >= 2) {
    Checkpoint ckpt = load_gan(c);
    const std::string layer = resolve_layer(c);
    const std::string hash = ckpt.feature_hash();
    auto cache = make_cache(c, hash);
    std::map<std::string, std::vector<FusionMap>> maps;
    for (const auto& cond : conditions) {
      if (maps.contains(cond)) continue;
      const auto refs = frame_refs(*dataset, cond, c.placerec.frames, c.placerec.subset);
      maps[cond] = std::move(extract_layers(ckpt.model.g_ab, refs, {layer}, hash, cache ? &*cache : nullptr).at(layer));
    }
    std::vector<std::pair<std::string, PrCurve>> curves;
    for (std::size_t i = 0; i < conditions.size(); ++i)
      for (std::size_t j = i + 1; j < conditions.size(); ++j) {
        const auto& q = conditions[i];
        const auto& d = conditions[j];
        const ScoreMatrix m = score_matrix(maps.at(q), maps.at(d), gt);
        const fs::path pdir = dir / pair_name(q, d);
        write_score_matrix(m, pdir / "scores.bin");
        result.pairs.push_back(report_pair(m, c, q, d, pdir, lookup_for(q, d)));
        curves.emplace_back(q + "-" + d, pr_curve(m, c.placerec.thresholds.empty()
                                                         ? std::nullopt
                                                         : std::optional(c.placerec.thresholds)));
        say(o, "%s vs %s: F1 %.4f at threshold %.4f\n", q.c_str(), d.c_str(), result.pairs.back().f1,
            result.pairs.back().threshold);
      }
    plot_pr_curves(curves, "PR curves (" + layer + ")", dir / "pr_all.png");

    std::ofstream summary(dir / "summary.csv");
    if (!summary) throw Error("cannot write " + (dir / "summary.csv").string());
    summary << "query,db,f1,threshold\n";
    double mean = 0.0;
    char buf[256];
    for (const auto& p : result.pairs) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g\n", p.query.c_str(), p.db.c_str(), p.f1, p.threshold);
      summary << buf;
      mean += p.f1;
    }
    mean /= static_cast<double>(result.pairs.size());
    std::snprintf(buf, sizeof(buf), "average,,%.9g,\n", mean);
    summary << buf;
    say(o, "average F1 over %zu pairs: %.4f\n", result.pairs.size(), mean);
  } else if (c.placerec.import_matrix.empty()) {
    throw Error("placerec needs at least two conditions or an imported matrix");
  }

  if (!c.placerec.import_matrix.empty()) {
    const ScoreMatrix m = read_score_matrix(c.placerec.import_matrix, gt);
    const auto& q = c.placerec.import_query;
    const auto& d = c.placerec.import_db;
    result.imported = report_pair(m, c, q, d, dir / "imported", lookup_for(q, d));
    say(o, "imported %s (%zux%zu): F1 %.4f\n", c.placerec.import_matrix.c_str(), m.rows, m.cols, result.imported->f1);
  }
  return result;
}

std::vector<fs::path> cmd_train_pose(const PipelineConfig& c, const CommandOptions& o) {
  PoseContext ctx = pose_context(c);
  const auto& d = *ctx.dataset;
  Checkpoint ckpt = load_gan(c);
  const std::string layer = resolve_layer(c);
  const std::string hash = ckpt.feature_hash();

  const auto maps = fusion_maps(c, ckpt, layer, d, ctx.train_fusion);
  std::vector<FeatureExample> fusion;
  for (std::size_t k = 0; k < ctx.train_fusion.size(); ++k)
    fusion.push_back({maps[k], pose_of(ctx.tracks, d.images[ctx.train_fusion[k]])});

  auto rgb_examples = [&](const std::vector<std::size_t>& images, const PoseTrainConfig& cfg) {
    std::vector<PoseExample> out;
    for (std::size_t i : images) out.push_back({prepare_rgb(d.images[i].image, cfg), pose_of(ctx.tracks, d.images[i])});
    return out;
  };

  std::vector<fs::path> written;
  for (int r = 0; r < c.pose.repeats; ++r) {
    const PoseTrainConfig cfg = c.pose_config(r);
    for (const auto& method : pose_methods(c)) {
      const std::string tag = method + "_r" + std::to_string(r);
      const fs::path log = c.pose_dir() / ("loss_" + tag + ".csv");
      PoseModel model;
      if (method == "fusion") model = train_pose(cfg, fusion, log);
      else model = train_regressor(cfg, rgb_examples(method == "rgb" ? ctx.train_fusion : ctx.train_pooled, cfg), "rgb", log);
      const fs::path path = model_path(c, method, r);
      save_pose_model(model, path);
      written.push_back(path);
      say(o, "trained %s (%lld iterations) -> %s\n", tag.c_str(), static_cast<long long>(model.iterations), path.c_str());
    }
  }
  if (ckpt.feature_hash() != hash) throw Error("feature extractor changed during pose training");
  return written;
}

PoseEvalResult cmd_eval_pose(const PipelineConfig& c, const CommandOptions& o) {
  PoseContext ctx = pose_context(c);
  const auto& d = *ctx.dataset;
  std::vector<Pose> gts;
  std::vector<FrameId> frames;
  std::vector<const ImageTensor*> images;
  for (std::size_t i : ctx.eval) {
    gts.push_back(pose_of(ctx.tracks, d.images[i]));
    frames.push_back(d.images[i].frame);
    images.push_back(&d.images[i].image);
  }

  std::optional<Checkpoint> ckpt;
  PoseEvalResult result;
  json report = {{"config", to_json(c)}, {"eval_condition", c.pose.eval_condition}, {"frames", frames.size()}};
  json methods = json::object();
  for (const auto& method : pose_methods(c)) {
    MethodResult mr;
    mr.method = method;
    json reps = json::array();
    for (int r = 0; r < c.pose.repeats; ++r) {
      const fs::path path = model_path(c, method, r);
      if (!fs::exists(path)) throw Error("missing pose model " + path.string() + " (run `invloc train-pose`)");
      const PoseModel model = load_pose_model(path);
      std::vector<Pose> preds;
      if (model.input_kind == "fusion") {
        if (!ckpt) ckpt = load_gan(c);
        preds = predict_pose_batch(model, images, &ckpt->model.g_ab, ckpt->feature_hash());
      } else {
        preds = predict_pose_batch(model, images);
      }
      const PoseEvaluation ev = eval_pose(preds, gts);
      mr.repeats.push_back(ev);
      mr.mean_translation += ev.mean_translation / c.pose.repeats;
      mr.mean_rotation += ev.mean_rotation / c.pose.repeats;
      json rj = to_json(ev);
      rj["seed"] = model.config.seed;
      reps.push_back(std::move(rj));
      if (r == 0)
        export_trajectory(preds, gts, frames, c.pose_dir() / ("trajectory_" + method + ".csv"),
                          c.pose_dir() / ("trajectory_" + method + ".png"));
    }
    methods[method] = {{"mean_translation_m", mr.mean_translation},
                       {"mean_rotation_deg", mr.mean_rotation},
                       {"repeats", reps}};
    say(o, "%-10s mean translation %.3f m  mean rotation %.3f deg  (%d repeat%s)\n", method.c_str(),
        mr.mean_translation, mr.mean_rotation, c.pose.repeats, c.pose.repeats == 1 ? "" : "s");
    result.methods.push_back(std::move(mr));
  }
  report["methods"] = methods;
  write_json(report, c.pose_dir() / "eval.json");

  std::ofstream summary(c.pose_dir() / "summary.csv");
  if (!summary) throw Error("cannot write pose summary");
  summary << "method,mean_translation_m,mean_rotation_deg\n";
  char buf[160];
  for (const auto& m : result.methods) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g\n", m.method.c_str(), m.mean_translation, m.mean_rotation);
    summary << buf;
  }
  return result;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Appearance-invariant localization pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  bool force = false;
  bool resume = false;
  const std::vector<std::string> names{"synth", "train-features", "analyze-layers", "placerec", "train-pose", "eval-pose"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "pipeline config (INI)")->required()->check(CLI::ExistingFile);
    sub->add_flag("--force", force, "overwrite existing output");
    sub->add_flag("--resume", resume, "continue from the last checkpoint");
  }
  CLI11_PARSE(app, argc, argv);

  try {
    const PipelineConfig config = load_pipeline_config(config_path);
    CommandOptions o{force, resume, &std::cout};
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") cmd_synth(config, o);
    else if (cmd == "train-features") cmd_train_features(config, o);
    else if (cmd == "analyze-layers") cmd_analyze_layers(config, o);
    else if (cmd == "placerec") cmd_placerec(config, o);
    else if (cmd == "train-pose") cmd_train_pose(config, o);
    else cmd_eval_pose(config, o);
  } catch (const c10::Error& e) {
    std::cerr << "error: " << e.what_without_backtrace() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace invloc
