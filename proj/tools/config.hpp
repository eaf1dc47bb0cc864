#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "invloc/cyclegan.hpp"
#include "invloc/dataset.hpp"
#include "invloc/posereg.hpp"

namespace invloc {

struct DatasetSection {
  std::filesystem::path root;  // default <output_dir>/dataset
  DirectoryLayout layout = DirectoryLayout::per_condition;
  bool synthetic = true;
  std::vector<std::string> conditions{"summer", "fall", "winter", "spring"};
  int frames = 100;  // per condition, synthetic only
  int image_size = 64;
  std::vector<std::string> domain_a{"summer", "fall", "spring"};
  std::string domain_b = "winter";
  std::filesystem::path correspondences;  // default <root>/correspondences.csv, else shared frame ids
  std::filesystem::path poses;            // default <root>/poses.csv
};

struct GanSection {
  GanTrainConfig train;
  int base_channels = 64;
  int disc_base_channels = 64;
  int disc_layers = 3;
};

struct FeatureSection {
  std::string layer = "auto";  // catalog name, or the one chosen by analyze-layers
  std::vector<std::string> layers;  // analysed layers; default all 15
  std::string query_condition = "summer";
  std::string db_condition = "winter";
  int frames = 40;
  SubsetMode subset = SubsetMode::strided;
  bool cache = true;
};

struct PlacerecSection {
  int tolerance = 0;
  std::vector<double> thresholds;  // empty = auto
  std::vector<std::string> conditions;  // default: dataset conditions
  int frames = 40;
  SubsetMode subset = SubsetMode::strided;
  int grid_rows = 5;
  std::filesystem::path import_matrix;  // optional external score matrix
  std::string import_query;             // condition names the imported matrix refers to
  std::string import_db;
};

enum class PoseSplit { interleaved, shared };

struct PoseSection {
  PoseTrainConfig train;
  std::vector<std::string> train_conditions{"summer"};
  std::string eval_condition = "winter";
  PoseSplit split = PoseSplit::interleaved;
  bool baselines = true;
  int repeats = 1;
};

struct PipelineConfig {
  std::filesystem::path source;  // config file, empty when built in code
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  DatasetSection dataset;
  GanSection gan;
  FeatureSection features;
  PlacerecSection placerec;
  PoseSection pose;

  std::filesystem::path dataset_root() const;
  std::filesystem::path gan_dir() const { return output_dir / "gan"; }
  std::filesystem::path features_dir() const { return output_dir / "features"; }
  std::filesystem::path placerec_dir() const { return output_dir / "placerec"; }
  std::filesystem::path pose_dir() const { return output_dir / "pose"; }

  CycleGanSpec cyclegan_spec() const;
  GanTrainConfig gan_config() const;
  PoseTrainConfig pose_config(int repeat = 0) const;

  /// Cross-field checks; throws Error naming the offending key.
  void validate() const;
};

/// Parses an INI file. Unknown sections or keys are errors. Relative paths are
/// taken from the config file's directory; INVLOC_OUT overrides output_dir.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Same, from text; relative paths resolve against `base_dir`.
PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir);

/// INI text that parses back to an equivalent config.
std::string format_pipeline_config(const PipelineConfig& config);

nlohmann::json to_json(const PipelineConfig& config);

}  // namespace invloc
