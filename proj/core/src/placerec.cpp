#include "invloc/placerec.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "invloc/plot.hpp"

namespace invloc {
namespace fs = std::filesystem;

void ScoreMatrix::validate() const {
  if (scores.size() != rows * cols) throw Error("score matrix: payload does not match dimensions");
  if (query_ids.size() != rows || db_ids.size() != cols)
    throw Error("score matrix: id lists do not match dimensions");
  for (float s : scores)
    if (!std::isfinite(s)) throw Error("score matrix: non-finite score");
}

namespace {

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

ScoreMatrix score_matrix(const std::vector<FusionMap>& q_maps, const std::vector<FusionMap>& db_maps,
                         const CorrespondenceSet& gt, const SsimOptions& options, unsigned threads) {
  if (q_maps.empty() || db_maps.empty()) throw Error("score matrix needs at least one query and one database map");
  const int h = q_maps.front().height;
  const int w = q_maps.front().width;
  for (const auto* list : {&q_maps, &db_maps})
    for (const auto& m : *list)
      if (m.height != h || m.width != w)
        throw Error("score matrix: map shape " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                    " differs from " + std::to_string(h) + "x" + std::to_string(w));

  std::vector<SsimOperand> q_ops(q_maps.size()), db_ops(db_maps.size());
  parallel_for(q_maps.size(), threads, [&](std::size_t i) { q_ops[i] = SsimOperand(q_maps[i], options); });
  parallel_for(db_maps.size(), threads, [&](std::size_t j) { db_ops[j] = SsimOperand(db_maps[j], options); });

  ScoreMatrix m;
  m.rows = q_maps.size();
  m.cols = db_maps.size();
  m.scores.resize(m.rows * m.cols);
  m.gt = gt;
  for (const auto& q : q_maps) m.query_ids.push_back(q.source_frame);
  for (const auto& d : db_maps) m.db_ids.push_back(d.source_frame);
  parallel_for(m.rows * m.cols, threads, [&](std::size_t cell) {
    m.scores[cell] = static_cast<float>(ssim(q_ops[cell / m.cols], db_ops[cell % m.cols]));
  });
  return m;
}

std::vector<std::uint8_t> ground_truth_mask(const ScoreMatrix& m) {
  m.validate();
  std::map<FrameId, std::vector<std::size_t>> query_rows;
  for (std::size_t i = 0; i < m.rows; ++i) query_rows[m.query_ids[i]].push_back(i);
  std::map<FrameId, std::vector<std::size_t>> db_cols;
  for (std::size_t j = 0; j < m.cols; ++j) db_cols[m.db_ids[j]].push_back(j);

  const auto tol = static_cast<std::ptrdiff_t>(std::max(m.gt.tolerance, 0));
  const auto cols = static_cast<std::ptrdiff_t>(m.cols);
  std::vector<std::uint8_t> mask(m.rows * m.cols, 0);
  for (const auto& [q, d] : m.gt.pairs) {
    auto qi = query_rows.find(q);
    auto dj = db_cols.find(d);
    if (qi == query_rows.end() || dj == db_cols.end()) continue;
    for (std::size_t i : qi->second)
      for (std::size_t j : dj->second) {
        const auto c = static_cast<std::ptrdiff_t>(j);
        for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, c - tol); k <= std::min(cols - 1, c + tol); ++k)
          mask[i * m.cols + static_cast<std::size_t>(k)] = 1;
      }
  }
  return mask;
}

PrCurve pr_curve(const ScoreMatrix& m, const std::optional<std::vector<double>>& thresholds, std::size_t max_auto) {
  const auto mask = ground_truth_mask(m);
  const std::size_t n = m.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m.scores[a] < m.scores[b]; });
  std::vector<double> sorted(n);
  // suffix[k] = true cells among sorted positions k..n-1
  std::vector<std::size_t> suffix(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) sorted[k] = m.scores[order[k]];
  for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + mask[order[k]];

  PrCurve curve;
  curve.positives = suffix[0];
  if (curve.positives == 0) throw Error("PR curve: ground truth marks no cell of the score matrix");

  std::vector<double> ts;
  if (thresholds) {
    ts = *thresholds;
    for (double t : ts)
      if (std::isnan(t)) throw Error("PR curve: NaN threshold");
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  } else {
    std::vector<double> unique = sorted;
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    if (max_auto >= 2 && unique.size() > max_auto) {
      for (std::size_t k = 0; k < max_auto; ++k) {
        const double pos = static_cast<double>(k) * static_cast<double>(unique.size() - 1) / (max_auto - 1);
        ts.push_back(unique[static_cast<std::size_t>(std::llround(pos))]);
      }
      ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    } else {
      ts = std::move(unique);
    }
  }
  if (ts.empty()) throw Error("PR curve: empty threshold list");

  for (double t : ts) {
    const auto k = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
    PrPoint p;
    p.threshold = t;
    p.predicted = n - k;
    p.true_positives = suffix[k];
    p.precision = p.predicted == 0 ? 1.0 : static_cast<double>(p.true_positives) / static_cast<double>(p.predicted);
    p.recall = static_cast<double>(p.true_positives) / static_cast<double>(curve.positives);
    curve.points.push_back(p);
  }
  curve.best_f1 = -1.0;
  for (const auto& p : curve.points) {
    const double f = p.precision + p.recall > 0 ? 2.0 * p.precision * p.recall / (p.precision + p.recall) : 0.0;
    if (f > curve.best_f1) {
      curve.best_f1 = f;
      curve.best_threshold = p.threshold;
    }
  }
  return curve;
}

double f1_best(const PrCurve& curve) {
  if (curve.points.empty()) throw Error("f1_best: empty PR curve");
  double best = 0.0;
  for (const auto& p : curve.points) {
    const double s = p.precision + p.recall;
    if (s > 0) best = std::max(best, 2.0 * p.precision * p.recall / s);
  }
  return best;
}

std::vector<QueryMatches> match_report(const ScoreMatrix& m, std::size_t k) {
  if (k > m.cols) throw Error("match report: k exceeds the database size");
  const auto mask = ground_truth_mask(m);
  std::vector<QueryMatches> report(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::vector<std::size_t> cols(m.cols);
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    std::stable_sort(cols.begin(), cols.end(), [&](std::size_t a, std::size_t b) { return m.at(i, a) > m.at(i, b); });
    report[i].query_id = m.query_ids[i];
    for (std::size_t r = 0; r < k; ++r)
      report[i].ranked.push_back({m.db_ids[cols[r]], m.at(i, cols[r]), mask[i * m.cols + cols[r]] != 0});
  }
  return report;
}

void write_pr_csv(const PrCurve& curve, const fs::path& path) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "threshold,precision,recall\n";
  char line[96];
  for (const auto& p : curve.points) {
    std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g\n", p.threshold, p.precision, p.recall);
    out << line;
  }
  if (!out) throw Error("write failed for " + path.string());
}

void plot_pr_curves(const std::vector<std::pair<std::string, PrCurve>>& curves, const std::string& title,
                    const fs::path& path) {
  std::vector<PlotSeries> series;
  for (std::size_t c = 0; c < curves.size(); ++c) {
    PlotSeries s;
    char label[96];
    std::snprintf(label, sizeof(label), "%s F1=%.2f", curves[c].first.c_str(), curves[c].second.best_f1);
    s.label = label;
    s.color = palette(c);
    for (auto it = curves[c].second.points.rbegin(); it != curves[c].second.points.rend(); ++it) {
      s.x.push_back(it->recall);
      s.y.push_back(it->precision);
    }
    series.push_back(std::move(s));
  }
  PlotOptions o;
  o.title = title;
  o.x_label = "recall";
  o.y_label = "precision";
  o.x_range = std::array<double, 2>{0.0, 1.02};
  o.y_range = std::array<double, 2>{0.0, 1.02};
  plot_lines(series, o, path);
}

void write_score_matrix(const ScoreMatrix& m, const fs::path& path) {
  m.validate();
  write_map_file(path, static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols), m.scores);
  std::ofstream ids(path.string() + ".ids.csv");
  if (!ids) throw Error("cannot write id sidecar for " + path.string());
  ids << "axis,position,frame\n";
  for (std::size_t i = 0; i < m.rows; ++i) ids << "query," << i << ',' << m.query_ids[i] << '\n';
  for (std::size_t j = 0; j < m.cols; ++j) ids << "db," << j << ',' << m.db_ids[j] << '\n';
}

ScoreMatrix read_score_matrix(const fs::path& path, const CorrespondenceSet& gt) {
  MapFile mf = read_map_file(path);
  ScoreMatrix m;
  m.rows = mf.height;
  m.cols = mf.width;
  m.scores = std::move(mf.values);
  m.gt = gt;
  m.query_ids.assign(m.rows, 0);
  m.db_ids.assign(m.cols, 0);
  const fs::path sidecar = path.string() + ".ids.csv";
  std::ifstream ids(sidecar);
  if (!ids) throw Error("missing id sidecar " + sidecar.string());
  std::string line;
  std::getline(ids, line);
  std::vector<std::uint8_t> seen_q(m.rows, 0), seen_d(m.cols, 0);
  for (std::size_t lineno = 2; std::getline(ids, line); ++lineno) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string axis, pos, frame;
    if (!std::getline(row, axis, ',') || !std::getline(row, pos, ',') || !std::getline(row, frame))
      throw Error(sidecar.string() + ":" + std::to_string(lineno) + ": malformed row");
    std::size_t p = 0;
    FrameId f = 0;
    try {
      p = std::stoull(pos);
      f = std::stoll(frame);
    } catch (const std::exception&) {
      throw Error(sidecar.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    auto& ids_ref = axis == "query" ? m.query_ids : m.db_ids;
    auto& seen = axis == "query" ? seen_q : seen_d;
    if ((axis != "query" && axis != "db") || p >= ids_ref.size())
      throw Error(sidecar.string() + ":" + std::to_string(lineno) + ": bad axis or position");
    ids_ref[p] = f;
    seen[p] = 1;
  }
  if (std::count(seen_q.begin(), seen_q.end(), 0) || std::count(seen_d.begin(), seen_d.end(), 0))
    throw Error(sidecar.string() + ": id list incomplete");
  m.validate();
  return m;
}

void write_match_grid(const std::vector<QueryMatches>& report, const FrameImageLookup& lookup, const fs::path& path,
                      std::size_t max_rows) {
  constexpr int kCell = 128;
  constexpr int kBorder = 5;
  constexpr int kGap = 8;
  const std::size_t rows = std::min(max_rows, report.size());
  if (rows == 0) throw Error("match grid: empty report");
  const int cell = kCell + 2 * kBorder;
  ImageTensor canvas(static_cast<int>(rows) * (cell + kGap) + kGap, 2 * cell + 3 * kGap, 3, 1.0f);

  auto paste = [&](const ImageTensor* img, int top, int left, std::array<float, 3> frame) {
    for (int y = 0; y < cell; ++y)
      for (int x = 0; x < cell; ++x)
        for (int c = 0; c < 3; ++c) canvas.at(top + y, left + x, c) = frame[static_cast<std::size_t>(c)];
    if (!img || img->empty()) return;
    const ImageTensor r = resize_bilinear(*img, kCell, kCell);
    for (int y = 0; y < kCell; ++y)
      for (int x = 0; x < kCell; ++x)
        for (int c = 0; c < 3; ++c)
          canvas.at(top + kBorder + y, left + kBorder + x, c) = r.at(y, x, r.channels == 3 ? c : 0);
  };

  for (std::size_t r = 0; r < rows; ++r) {
    const auto& q = report[r];
    if (q.ranked.empty()) throw Error("match grid needs at least one ranked match per query");
    const int top = kGap + static_cast<int>(r) * (cell + kGap);
    const bool ok = q.ranked.front().correct;
    paste(lookup(true, q.query_id), top, kGap, {0.6f, 0.6f, 0.6f});
    paste(lookup(false, q.ranked.front().db_id), top, 2 * kGap + cell,
          ok ? std::array<float, 3>{-1.0f, 0.6f, -1.0f} : std::array<float, 3>{0.9f, -1.0f, -1.0f});
  }
  write_png(canvas, path);
}

}  // namespace invloc
