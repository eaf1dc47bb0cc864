#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "invloc/fusion.hpp"
#include "invloc/image.hpp"
#include "invloc/pose.hpp"
#include "invloc/ssim.hpp"

namespace invloc {

/// Query × database similarity grid.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> scores;  // row-major
  std::vector<FrameId> query_ids;
  std::vector<FrameId> db_ids;
  CorrespondenceSet gt;

  float at(std::size_t i, std::size_t j) const { return scores[i * cols + j]; }
  /// Throws when dims and id lists disagree or a score is not finite.
  void validate() const;
};

/// scores[i][j] = ssim(q_maps[i], db_maps[j]); ids come from the maps' source frames.
/// Cells are computed on `threads` workers (0 = hardware concurrency).
ScoreMatrix score_matrix(const std::vector<FusionMap>& q_maps, const std::vector<FusionMap>& db_maps,
                         const CorrespondenceSet& gt, const SsimOptions& options = {}, unsigned threads = 0);

/// Row-major mask of true-match cells under the correspondence tolerance.
std::vector<std::uint8_t> ground_truth_mask(const ScoreMatrix& m);

struct PrPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // strictly increasing thresholds
  std::size_t positives = 0;    // cells marked true by the ground truth
  double best_f1 = 0.0;
  double best_threshold = 0.0;
};

/// Sweeps a global threshold: every cell with score >= t is a predicted match.
/// With no explicit thresholds the sweep uses the unique scores, quantile
/// sampled down to `max_auto` values. Throws when the ground truth marks no cell.
PrCurve pr_curve(const ScoreMatrix& m, const std::optional<std::vector<double>>& thresholds = std::nullopt,
                 std::size_t max_auto = 2000);

/// Harmonic-mean maximum over the curve; 0 where P + R = 0.
double f1_best(const PrCurve& curve);

struct RankedMatch {
  FrameId db_id = 0;
  double score = 0.0;
  bool correct = false;
};

struct QueryMatches {
  FrameId query_id = 0;
  std::vector<RankedMatch> ranked;  // descending score, ties by database order
};

std::vector<QueryMatches> match_report(const ScoreMatrix& m, std::size_t k);

void write_pr_csv(const PrCurve& curve, const std::filesystem::path& path);
void plot_pr_curves(const std::vector<std::pair<std::string, PrCurve>>& curves, const std::string& title,
                    const std::filesystem::path& path);

/// Binary matrix in the fusion-map format plus `<path>.ids.csv` (axis,position,frame).
void write_score_matrix(const ScoreMatrix& m, const std::filesystem::path& path);
ScoreMatrix read_score_matrix(const std::filesystem::path& path, const CorrespondenceSet& gt);

/// Top-1 grid: each row pairs a query with its best database match, framed
/// green when correct and red otherwise.
using FrameImageLookup = std::function<const ImageTensor*(bool is_query, FrameId frame)>;
void write_match_grid(const std::vector<QueryMatches>& report, const FrameImageLookup& lookup,
                      const std::filesystem::path& path, std::size_t max_rows = 5);

}  // namespace invloc
