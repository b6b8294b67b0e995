// 3D MOT evaluation: per-frame IoU matching, CLEAR-style counts
// (FP, FN, IDS, FRAG, MOTA, MOTP) and the recall-swept AMOTA/AMOTP/sAMOTA.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "sfmot/errors.hpp"
#include "sfmot/geometry.hpp"
#include "sfmot/hungarian.hpp"
#include "sfmot/kitti_io.hpp"

namespace sfmot {

struct EvalBox {
  int id = -1;
  Box3D box;
  double score = 1.0;
};

using EvalFrame = std::vector<EvalBox>;

/// Frame-aligned ground truth and results of one sequence, one category.
struct EvalSequence {
  std::vector<EvalFrame> gt;
  std::vector<EvalFrame> pred;
};

enum class SmotaVariant {
  printed,        // max(0, MOTA_r / r), clamped at 1
  integrated_fn,  // 1 - (IDS + FP + FN - (1 - r) * num_gt) / (r * num_gt), clamped to [0, 1]
};

struct EvalConfig {
  double iou_thres = 0.25;
  std::string category = "Car";
  int num_recall_steps = 40;
  SmotaVariant smota = SmotaVariant::printed;

  void validate() const {
    if (!(iou_thres > 0.0 && iou_thres <= 1.0)) throw ConfigError("iou_thres must lie in (0, 1]");
    if (num_recall_steps < 1) throw ConfigError("num_recall_steps must be >= 1");
  }
};

/// Builds an evaluation sequence from KITTI label maps. Rows of other
/// categories are ignored. Boxes are compared in the camera frame turned z-up,
/// which needs no calibration.
inline EvalSequence make_eval_sequence(const FrameLabels& gt, const FrameLabels& results, const std::string& category,
                                       bool require_scores, std::optional<int> num_frames = std::nullopt) {
  int frames = num_frames.value_or(0);
  if (!num_frames) {
    if (!gt.empty()) frames = gt.rbegin()->first + 1;
    if (!results.empty()) frames = std::max(frames, results.rbegin()->first + 1);
  }
  if (!gt.empty() && gt.rbegin()->first >= frames) throw InputError("ground truth has frames beyond the sequence length");
  if (!results.empty() && results.rbegin()->first >= frames)
    throw InputError(fmt::format("results reference frame {} beyond the ground truth's {} frames", results.rbegin()->first, frames));

  const Calibration canonical;
  EvalSequence seq;
  seq.gt.resize(static_cast<std::size_t>(frames));
  seq.pred.resize(static_cast<std::size_t>(frames));
  auto fill = [&](const FrameLabels& src, std::vector<EvalFrame>& dst, bool is_result) {
    for (const auto& [frame, rows] : src) {
      std::set<int> seen;
      for (const auto& r : rows) {
        if (r.category != category) continue;
        if (!seen.insert(r.track_id).second)
          throw InputError(fmt::format("duplicate ({}, {}) row in {}", frame, r.track_id, is_result ? "results" : "ground truth"));
        if (is_result && require_scores && !r.score)
          throw InputError(fmt::format("result row (frame {}, id {}) has no confidence", frame, r.track_id));
        dst[static_cast<std::size_t>(frame)].push_back({r.track_id, box_from_label(r, canonical), r.score.value_or(1.0)});
      }
    }
  };
  fill(gt, seq.gt, false);
  fill(results, seq.pred, true);
  return seq;
}

struct FrameMatch {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (gt index, pred index)
  std::vector<double> ious;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Matches one frame. Pairs continuing the previous frame's (gt id -> pred id)
/// mapping are kept first when they reach `iou_thres`; the rest are matched by
/// maximum total IoU over pairs that reach the threshold.
inline FrameMatch match_frame(std::span<const EvalBox> gt, std::span<const EvalBox> pred, double iou_thres,
                              const std::map<int, int>& previous = {}) {
  FrameMatch m;
  std::vector<char> gt_used(gt.size(), 0), pred_used(pred.size(), 0);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const auto it = previous.find(gt[g].id);
    if (it == previous.end()) continue;
    for (std::size_t p = 0; p < pred.size(); ++p) {
      if (pred_used[p] || pred[p].id != it->second) continue;
      const double iou = iou3d(gt[g].box, pred[p].box);
      if (iou >= iou_thres) {
        gt_used[g] = pred_used[p] = 1;
        m.pairs.emplace_back(g, p);
        m.ious.push_back(iou);
      }
      break;
    }
  }

  std::vector<std::size_t> rg, rp;
  for (std::size_t g = 0; g < gt.size(); ++g)
    if (!gt_used[g]) rg.push_back(g);
  for (std::size_t p = 0; p < pred.size(); ++p)
    if (!pred_used[p]) rp.push_back(p);
  if (!rg.empty() && !rp.empty()) {
    Eigen::MatrixXd s(static_cast<Eigen::Index>(rg.size()), static_cast<Eigen::Index>(rp.size()));
    for (std::size_t i = 0; i < rg.size(); ++i)
      for (std::size_t j = 0; j < rp.size(); ++j) {
        const double iou = iou3d(gt[rg[i]].box, pred[rp[j]].box);
        s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = iou >= iou_thres ? iou : 0.0;
      }
    const Assignment a = solve_max_assignment<double>(s);
    for (std::size_t i = 0; i < rg.size(); ++i) {
      const int j = a.row_to_col[i];
      if (j < 0) continue;
      const double iou = s(static_cast<Eigen::Index>(i), j);
      if (iou <= 0.0) continue;
      gt_used[rg[i]] = pred_used[rp[static_cast<std::size_t>(j)]] = 1;
      m.pairs.emplace_back(rg[i], rp[static_cast<std::size_t>(j)]);
      m.ious.push_back(iou);
    }
  }
  m.fn = static_cast<std::size_t>(std::count(gt_used.begin(), gt_used.end(), 0));
  m.fp = static_cast<std::size_t>(std::count(pred_used.begin(), pred_used.end(), 0));
  return m;
}

struct EvalCounts {
  std::size_t num_gt = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t ids = 0;
  std::size_t frag = 0;
  double sum_iou = 0;

  double mota() const {
    // No ground truth: any output is an error relative to a single object.
    const double denom = static_cast<double>(std::max<std::size_t>(num_gt, 1));
    return 1.0 - static_cast<double>(fp + fn + ids) / denom;
  }
  double motp() const { return tp ? sum_iou / static_cast<double>(tp) : 0.0; }
  double recall() const { return num_gt ? static_cast<double>(tp) / static_cast<double>(num_gt) : 0.0; }

  EvalCounts& operator+=(const EvalCounts& o) {
    num_gt += o.num_gt;
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    ids += o.ids;
    frag += o.frag;
    sum_iou += o.sum_iou;
    return *this;
  }
};

/// Counts over one sequence, using only predictions scoring at least `min_score`.
inline EvalCounts evaluate_sequence(const EvalSequence& seq, double iou_thres,
                                    double min_score = -std::numeric_limits<double>::infinity()) {
  if (seq.gt.size() != seq.pred.size()) throw InputError("evaluate_sequence: gt and results are not frame-aligned");
  struct GtState {
    std::optional<int> last_pred;     // pred id at the most recent matched frame
    bool matched_last_seen = false;   // matched at the most recent frame it was present
    bool ever_matched = false;
  };
  std::map<int, GtState> state;
  std::map<int, int> previous;  // previous frame's gt id -> pred id
  EvalCounts c;
  EvalFrame pred;

  for (std::size_t f = 0; f < seq.gt.size(); ++f) {
    const EvalFrame& gt = seq.gt[f];
    pred.clear();
    for (const auto& p : seq.pred[f])
      if (p.score >= min_score) pred.push_back(p);

    const FrameMatch m = match_frame(gt, pred, iou_thres, previous);
    c.num_gt += gt.size();
    c.fp += m.fp;
    c.fn += m.fn;
    c.tp += m.pairs.size();
    for (double v : m.ious) c.sum_iou += v;

    std::map<int, int> current;
    std::vector<char> gt_matched(gt.size(), 0);
    for (const auto& [g, p] : m.pairs) {
      gt_matched[g] = 1;
      const int gid = gt[g].id, pid = pred[p].id;
      current[gid] = pid;
      GtState& s = state[gid];
      if (s.last_pred && *s.last_pred != pid) ++c.ids;
      if (s.ever_matched && !s.matched_last_seen) ++c.frag;
      s.last_pred = pid;
      s.ever_matched = true;
    }
    for (std::size_t g = 0; g < gt.size(); ++g) state[gt[g].id].matched_last_seen = gt_matched[g] != 0;
    previous = std::move(current);
  }
  return c;
}

inline EvalCounts evaluate_sequences(std::span<const EvalSequence> seqs, double iou_thres,
                                     double min_score = -std::numeric_limits<double>::infinity()) {
  EvalCounts total;
  for (const auto& s : seqs) total += evaluate_sequence(s, iou_thres, min_score);
  return total;
}

struct RecallRow {
  double r = 0;
  double threshold = 0;  // confidence cut used for this row
  double recall = 0;     // achieved recall at that cut
  double mota = 0;
  double motp = 0;
  double smota = 0;
  std::size_t fp = 0, fn = 0, ids = 0, frag = 0;
};

struct MetricsReport {
  std::vector<RecallRow> rows;
  double samota = 0;  // percent
  double amota = 0;   // percent
  double amotp = 0;   // percent
  double mota = 0;    // best row, fraction
  double motp = 0;    // at the best-MOTA row, fraction
  std::size_t ids = 0;
  std::size_t frag = 0;
};

inline double scaled_mota(double r, double mota, const EvalCounts& c, SmotaVariant variant) {
  if (!(r > 0)) throw InputError("scaled_mota: recall must be positive");
  double v = 0;
  if (variant == SmotaVariant::printed) {
    v = mota / r;
  } else {
    const double gt = static_cast<double>(c.num_gt);
    v = 1.0 - (static_cast<double>(c.ids + c.fp + c.fn) - (1.0 - r) * gt) / (r * gt);
  }
  return std::clamp(v, 0.0, 1.0);
}

inline double scaled_mota(double r, double mota) { return std::clamp(mota / r, 0.0, 1.0); }

/// Fills the aggregate fields from `report.rows`.
inline void aggregate_rows(MetricsReport& report) {
  if (report.rows.empty()) throw InputError("aggregate_rows: no recall rows");
  double sm = 0, am = 0, ap = 0;
  const RecallRow* best = &report.rows.front();
  for (const auto& row : report.rows) {
    sm += row.smota;
    am += row.mota;
    ap += row.motp;
    if (row.mota > best->mota) best = &row;
  }
  const double n = static_cast<double>(report.rows.size());
  report.samota = 100.0 * sm / n;
  report.amota = 100.0 * am / n;
  report.amotp = 100.0 * ap / n;
  report.mota = best->mota;
  report.motp = best->motp;
  report.ids = best->ids;
  report.frag = best->frag;
}

/// Sweeps confidence cuts so that each target recall r = k/L is met from
/// above, then averages MOTA_r, MOTP_r and sMOTA_r over the L rows.
inline MetricsReport recall_sweep(std::span<const EvalSequence> seqs, const EvalConfig& cfg) {
  cfg.validate();
  std::vector<double> cuts;
  for (const auto& s : seqs)
    for (const auto& f : s.pred)
      for (const auto& p : f) cuts.push_back(p.score);
  std::sort(cuts.begin(), cuts.end(), std::greater<>());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  if (cuts.empty()) cuts.push_back(std::numeric_limits<double>::infinity());

  std::map<std::size_t, EvalCounts> memo;
  auto counts_at = [&](std::size_t k) -> const EvalCounts& {
    auto it = memo.find(k);
    if (it == memo.end()) it = memo.emplace(k, evaluate_sequences(seqs, cfg.iou_thres, cuts[k])).first;
    return it->second;
  };
  if (counts_at(cuts.size() - 1).num_gt == 0) throw InputError(fmt::format("no ground truth of category {}", cfg.category));

  MetricsReport report;
  const int L = cfg.num_recall_steps;
  for (int step = 1; step <= L; ++step) {
    const double r = static_cast<double>(step) / L;
    // Highest cut whose recall reaches r; recall grows as the cut is lowered.
    std::size_t lo = 0, hi = cuts.size() - 1;
    if (counts_at(hi).recall() + 1e-12 < r) {
      lo = hi;  // unreachable: evaluate everything
    } else {
      while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (counts_at(mid).recall() + 1e-12 >= r) hi = mid;
        else lo = mid + 1;
      }
    }
    const EvalCounts& c = counts_at(lo);
    RecallRow row;
    row.r = r;
    row.threshold = cuts[lo];
    row.recall = c.recall();
    row.mota = c.mota();
    row.motp = c.motp();
    row.smota = scaled_mota(r, row.mota, c, cfg.smota);
    row.fp = c.fp;
    row.fn = c.fn;
    row.ids = c.ids;
    row.frag = c.frag;
    report.rows.push_back(row);
  }
  aggregate_rows(report);
  return report;
}

// ---- report output -----------------------------------------------------------

inline std::string format_report_table(const std::string& category, const std::vector<std::pair<double, MetricsReport>>& sections) {
  std::string out = fmt::format("{:<10} {:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6} {:>6}\n", "Category", "Matching", "sAMOTA",
                                "AMOTA", "AMOTP", "MOTA", "MOTP", "IDS", "FRAG");
  for (const auto& [thres, r] : sections)
    out += fmt::format("{:<10} {:<16} {:>8.2f} {:>8.2f} {:>8.2f} {:>8.2f} {:>8.2f} {:>6} {:>6}\n", category,
                       fmt::format("IoU_thres={:.2f}", thres), r.samota, r.amota, r.amotp, r.mota, r.motp, r.ids, r.frag);
  return out;
}

inline std::string format_report_kv(const std::string& category, const std::vector<std::pair<double, MetricsReport>>& sections) {
  std::string out;
  for (const auto& [thres, r] : sections) {
    out += fmt::format("[iou_thres={:.2f}]\n", thres);
    out += fmt::format("category={}\nsAMOTA={:.2f}\nAMOTA={:.2f}\nAMOTP={:.2f}\nMOTA={:.2f}\nMOTP={:.2f}\nIDS={}\nFRAG={}\n", category,
                       r.samota, r.amota, r.amotp, r.mota, r.motp, r.ids, r.frag);
    for (const auto& row : r.rows)
      out += fmt::format("row r={:.4f} threshold={:.6f} recall={:.4f} MOTA={:.4f} MOTP={:.4f} sMOTA={:.4f} FP={} FN={} IDS={}\n", row.r,
                         row.threshold, row.recall, row.mota, row.motp, row.smota, row.fp, row.fn, row.ids);
  }
  return out;
}

}  // namespace sfmot
