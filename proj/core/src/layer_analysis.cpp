#include "invloc/layer_analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "invloc/placerec.hpp"
#include "invloc/plot.hpp"

namespace invloc {
namespace fs = std::filesystem;

double LayerAnalysis::f1_of(const std::string& layer) const {
  for (const auto& s : layers)
    if (s.layer == layer) return s.f1;
  throw Error("layer '" + layer + "' not in analysis");
}

LayerAnalysis analyze_layer_maps(const std::vector<std::string>& layers,
                                 const std::vector<std::vector<FusionMap>>& query_maps,
                                 const std::vector<std::vector<FusionMap>>& db_maps, const CorrespondenceSet& gt,
                                 const SsimOptions& options) {
  if (layers.empty()) throw Error("layer analysis needs at least one layer");
  if (query_maps.size() != layers.size() || db_maps.size() != layers.size())
    throw Error("layer analysis: one map list per layer expected");
  LayerAnalysis analysis;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const ScoreMatrix m = score_matrix(query_maps[l], db_maps[l], gt, options);
    const PrCurve curve = pr_curve(m);
    analysis.layers.push_back({layers[l], curve.best_f1, curve.best_threshold});
  }
  analysis.selected_layer = select_layer(analysis);
  return analysis;
}

LayerAnalysis layer_f1_analysis(Generator& g_ab, const std::string& checkpoint_hash, std::span<const FrameRef> queries,
                                std::span<const FrameRef> database, const CorrespondenceSet& gt,
                                const std::vector<std::string>& layers, const FusionCache* cache) {
  if (layers.empty()) throw Error("layer analysis needs at least one layer");
  auto q = extract_layers(g_ab, queries, layers, checkpoint_hash, cache);
  auto d = extract_layers(g_ab, database, layers, checkpoint_hash, cache);
  std::vector<std::vector<FusionMap>> q_maps, d_maps;
  for (const auto& layer : layers) {
    q_maps.push_back(std::move(q.at(layer)));
    d_maps.push_back(std::move(d.at(layer)));
  }
  return analyze_layer_maps(layers, q_maps, d_maps, gt);
}

std::string select_layer(const LayerAnalysis& analysis) {
  if (analysis.layers.empty()) throw Error("select_layer: empty analysis");
  const LayerScore* best = nullptr;
  auto rank = [](const std::string& name) {
    const int i = generator_layer_index(name);
    return i < 0 ? 1000 : i;
  };
  for (const auto& s : analysis.layers) {
    if (!best || s.f1 > best->f1 || (s.f1 == best->f1 && rank(s.layer) < rank(best->layer))) best = &s;
  }
  return best->layer;
}

void write_layer_report(const LayerAnalysis& analysis, const fs::path& csv_path, const fs::path& plot_path) {
  ensure_parent_dir(csv_path);
  std::ofstream out(csv_path);
  if (!out) throw Error("cannot write " + csv_path.string());
  out << "layer,f1\n";
  std::vector<std::string> labels;
  std::vector<double> values;
  char buf[32];
  for (const auto& s : analysis.layers) {
    std::snprintf(buf, sizeof(buf), "%.9g", s.f1);
    out << s.layer << ',' << buf << '\n';
    labels.push_back(s.layer);
    values.push_back(s.f1);
  }
  if (!out) throw Error("write failed for " + csv_path.string());
  PlotOptions o;
  o.title = "F1 per generator layer (selected: " + analysis.selected_layer + ")";
  o.y_label = "F1";
  o.width = std::max(480, 60 * static_cast<int>(labels.size()) + 100);
  o.y_range = std::array<double, 2>{0.0, 1.05};
  plot_bars(labels, values, o, plot_path);
}

}  // namespace invloc
