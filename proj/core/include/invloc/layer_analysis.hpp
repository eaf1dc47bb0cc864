#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "invloc/fusion.hpp"
#include "invloc/generator.hpp"
#include "invloc/pose.hpp"
#include "invloc/ssim.hpp"

namespace invloc {

struct LayerScore {
  std::string layer;
  double f1 = 0.0;
  double threshold = 0.0;  // where the best F1 was reached
};

struct LayerAnalysis {
  std::vector<LayerScore> layers;  // in the order analysed
  std::string selected_layer;

  double f1_of(const std::string& layer) const;
};

/// Per-layer best F1 of SSIM place recognition from precomputed maps;
/// maps[l] holds the query (or database) maps of layers[l].
LayerAnalysis analyze_layer_maps(const std::vector<std::string>& layers,
                                 const std::vector<std::vector<FusionMap>>& query_maps,
                                 const std::vector<std::vector<FusionMap>>& db_maps, const CorrespondenceSet& gt,
                                 const SsimOptions& options = {});

/// Extracts fusion maps of every listed layer for both sets, then scores them.
LayerAnalysis layer_f1_analysis(Generator& g_ab, const std::string& checkpoint_hash,
                                std::span<const FrameRef> queries, std::span<const FrameRef> database,
                                const CorrespondenceSet& gt, const std::vector<std::string>& layers,
                                const FusionCache* cache = nullptr);

/// Highest F1; the earlier catalog layer wins ties.
std::string select_layer(const LayerAnalysis& analysis);

/// CSV `layer,f1` and a bar chart of the same values.
void write_layer_report(const LayerAnalysis& analysis, const std::filesystem::path& csv_path,
                        const std::filesystem::path& plot_path);

}  // namespace invloc
