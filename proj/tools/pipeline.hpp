#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "invloc/layer_analysis.hpp"
#include "invloc/placerec.hpp"

namespace invloc {

struct CommandOptions {
  bool force = false;
  bool resume = false;
  std::ostream* out = nullptr;  // progress and summaries; null = silent
};

struct SynthResult {
  std::filesystem::path root;
  std::uint64_t digest = 0;
  std::size_t images = 0;
};

struct PairReport {
  std::string query;
  std::string db;
  double f1 = 0.0;
  double threshold = 0.0;
  std::filesystem::path dir;
};

struct PlacerecResult {
  std::vector<PairReport> pairs;
  std::optional<PairReport> imported;
};

struct MethodResult {
  std::string method;  // "fusion", "rgb" or "rgb_pooled"
  std::vector<PoseEvaluation> repeats;
  double mean_translation = 0.0;  // averaged over repeats
  double mean_rotation = 0.0;
};

struct PoseEvalResult {
  std::vector<MethodResult> methods;
  const MethodResult& method(const std::string& name) const;
};

SynthResult cmd_synth(const PipelineConfig& config, const CommandOptions& options = {});
Checkpoint cmd_train_features(const PipelineConfig& config, const CommandOptions& options = {});
LayerAnalysis cmd_analyze_layers(const PipelineConfig& config, const CommandOptions& options = {});
PlacerecResult cmd_placerec(const PipelineConfig& config, const CommandOptions& options = {});
std::vector<std::filesystem::path> cmd_train_pose(const PipelineConfig& config, const CommandOptions& options = {});
PoseEvalResult cmd_eval_pose(const PipelineConfig& config, const CommandOptions& options = {});

/// Objective at the start and end of a loss log, each the mean over `window` iterations.
struct ObjectiveTrend {
  double initial = 0.0;
  double final = 0.0;
  std::size_t window = 0;
};
/// Loads the configured dataset from disk.
std::shared_ptr<const MultiDomainDataset> load_dataset(const PipelineConfig& c);

ObjectiveTrend objective_trend(const std::vector<LossRecord>& history, std::size_t window = 100);

/// Objective of the freshly initialised networks (same seed) and of `trained`,
/// both evaluated on one fixed draw of `samples` image pairs.
struct ObjectiveComparison {
  double initial = 0.0;
  double final = 0.0;
  int samples = 0;
  double ratio() const { return final / initial; }
};
ObjectiveComparison compare_objective(const PipelineConfig& c, const Checkpoint& trained, const DomainSplit& split,
                                      int samples = 64);

/// Runs one subcommand from argv; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace invloc
