// Flow-driven tracklet prediction, IoU/Hungarian association and the
// birth/death lifecycle.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "sfmot/errors.hpp"
#include "sfmot/flow.hpp"
#include "sfmot/geometry.hpp"
#include "sfmot/hungarian.hpp"
#include "sfmot/kitti_io.hpp"
#include "sfmot/point_cloud.hpp"
#include "sfmot/track_types.hpp"

namespace sfmot {

/// Per-tracklet increment: mean in-box flow plus yaw increment.
struct Offset {
  double dx = 0, dy = 0, dz = 0;
  double dtheta = 0;

  friend bool operator==(const Offset&, const Offset&) = default;
};

enum class Predictor { flow, constant_velocity };

struct TrackerConfig {
  double iou_min = 0.01;
  int max_mis = 2;
  int min_det = 3;
  Predictor predictor = Predictor::flow;
  // On confirmation, also emit the boxes the tracklet held while provisional.
  bool backfill = true;

  void validate() const {
    if (!(iou_min >= 0.0 && iou_min <= 1.0)) throw ConfigError("iou_min must lie in [0, 1]");
    if (max_mis < 0) throw ConfigError("max_mis must be >= 0");
    if (min_det < 1) throw ConfigError("min_det must be >= 1");
  }
};

struct Tracklet {
  int id = -1;
  Box3D box;
  double confidence = 0;
  std::string category;
  int age_missed = 0;  // consecutive unmatched frames
  int hits = 0;        // consecutive matched frames
  bool confirmed = false;
  std::optional<double> yaw_prev;  // theta one frame before `box`
  std::optional<Box3D> box_prev;   // box one frame before `box`

  struct Provisional {
    int frame;
    Box3D box;
    double confidence;
  };
  std::vector<Provisional> provisional;  // boxes held before confirmation
};

struct OffsetEstimate {
  Offset offset;
  std::size_t support = 0;  // in-box points that contributed
  bool flow_starved() const { return support == 0; }
};

/// Mean flow of the previous-frame points inside the tracklet box; yaw
/// increment from the last two adopted headings (0 without history).
inline OffsetEstimate compute_offset(const Tracklet& t, const PointCloud& prev_cloud, const FlowField& flow) {
  flow.check_aligned(prev_cloud);
  OffsetEstimate est;
  est.offset.dtheta = t.yaw_prev ? normalize_angle(t.box.theta - *t.yaw_prev) : 0.0;
  const auto idx = points_in_box(t.box, prev_cloud.positions);
  if (idx.empty()) return est;
  Vec3 sum = Vec3::Zero();
  for (std::size_t i : idx) sum += flow.vectors[i];
  sum /= static_cast<double>(idx.size());
  est.offset.dx = sum.x();
  est.offset.dy = sum.y();
  est.offset.dz = sum.z();
  est.support = idx.size();
  return est;
}

inline Box3D predict(const Box3D& box, const Offset& o) {
  return {box.x + o.dx, box.y + o.dy, box.z + o.dz, box.l, box.w, box.h, box.theta + o.dtheta};
}

inline Box3D predict(const Tracklet& t, const Offset& o) { return predict(t.box, o); }

/// Linear extrapolation from the last two states (oldest first); a single
/// state is returned unchanged.
inline Box3D predict_constant_velocity(std::span<const Box3D> history) {
  if (history.empty()) throw InputError("predict_constant_velocity: empty history");
  const Box3D& cur = history.back();
  if (history.size() == 1) return cur;
  const Box3D& prev = history[history.size() - 2];
  return predict(cur, Offset{cur.x - prev.x, cur.y - prev.y, cur.z - prev.z, normalize_angle(cur.theta - prev.theta)});
}

inline Box3D predict_constant_velocity(const Tracklet& t) {
  if (t.box_prev) {
    const std::array<Box3D, 2> h{*t.box_prev, t.box};
    return predict_constant_velocity(h);
  }
  return t.box;
}

/// S[i][j] = iou3d(predicted_i, detection_j); pairs whose categories differ
/// are 0. `categories` may be empty to skip the category gate.
inline Eigen::MatrixXd build_similarity(std::span<const Box3D> predicted, std::span<const Detection> detections,
                                        std::span<const std::string> categories = {}) {
  if (!categories.empty() && categories.size() != predicted.size())
    throw ContractViolation("build_similarity: one category per predicted box required");
  Eigen::MatrixXd s(static_cast<Eigen::Index>(predicted.size()), static_cast<Eigen::Index>(detections.size()));
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (std::size_t j = 0; j < detections.size(); ++j) {
      const bool same = categories.empty() || categories[i] == detections[j].category;
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = same ? iou3d(predicted[i], detections[j].box) : 0.0;
    }
  return s;
}

struct AssociationResult {
  std::vector<std::pair<int, int>> matches;  // (tracklet, detection), ascending tracklet index
  std::vector<int> unmatched_tracklets;
  std::vector<int> unmatched_detections;
};

/// Maximum-total-similarity one-to-one assignment; pairs below `iou_min` are
/// demoted to unmatched on both sides.
inline AssociationResult associate(const Eigen::MatrixXd& s, double iou_min) {
  AssociationResult r;
  const Assignment a = solve_max_assignment<double>(s);
  std::vector<char> det_used(static_cast<std::size_t>(s.cols()), 0);
  for (int i = 0; i < static_cast<int>(s.rows()); ++i) {
    const int j = a.row_to_col[static_cast<std::size_t>(i)];
    if (j >= 0 && s(i, j) >= iou_min && s(i, j) > 0.0) {
      r.matches.emplace_back(i, j);
      det_used[static_cast<std::size_t>(j)] = 1;
    } else {
      r.unmatched_tracklets.push_back(i);
    }
  }
  for (int j = 0; j < static_cast<int>(s.cols()); ++j)
    if (!det_used[static_cast<std::size_t>(j)]) r.unmatched_detections.push_back(j);
  return r;
}

struct StepResult {
  std::vector<EmittedTrack> emitted;   // confirmed tracklets at this frame, ascending id
  std::vector<FrameTracks> backfill;   // earlier frames of tracklets confirmed at this frame
  std::size_t flow_starved = 0;        // tracklets predicted by constant velocity for lack of in-box points
};

/// Sequence-local tracking state. Not thread-safe; one instance per sequence.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const TrackerConfig& config() const { return cfg_; }
  const std::vector<Tracklet>& tracklets() const { return tracklets_; }

  /// Advances to `frame`. `prev_cloud` is the previous frame's sampled cloud
  /// and `flow` its aligned scene flow (ignored by the constant-velocity predictor).
  StepResult step(int frame, std::span<const Detection> detections, const PointCloud& prev_cloud, const FlowField& flow) {
    if (cfg_.predictor == Predictor::flow && flow.size() != prev_cloud.size())
      throw ContractViolation(fmt::format("frame {}: flow has {} vectors for {} previous points", frame, flow.size(), prev_cloud.size()));
    for (const auto& d : detections) d.validate();

    StepResult out;
    std::vector<Box3D> predicted;
    std::vector<std::string> cats;
    predicted.reserve(tracklets_.size());
    for (const auto& t : tracklets_) {
      predicted.push_back(predict_tracklet(t, prev_cloud, flow, out.flow_starved));
      cats.push_back(t.category);
    }

    const Eigen::MatrixXd s = build_similarity(predicted, detections, cats);
    const AssociationResult assoc = associate(s, cfg_.iou_min);

    std::vector<char> keep(tracklets_.size(), 1);
    for (const auto& [ti, di] : assoc.matches) {
      Tracklet& t = tracklets_[static_cast<std::size_t>(ti)];
      const Detection& d = detections[static_cast<std::size_t>(di)];
      t.box_prev = t.box;
      t.yaw_prev = t.box.theta;
      t.box = d.box;
      t.confidence = d.confidence;
      t.hits += 1;
      t.age_missed = 0;
      if (!t.confirmed) {
        t.provisional.push_back({frame, t.box, t.confidence});
        if (t.hits >= cfg_.min_det) confirm(t, out);
      }
    }
    for (int ti : assoc.unmatched_tracklets) {
      Tracklet& t = tracklets_[static_cast<std::size_t>(ti)];
      // A provisional tracklet needs an unbroken run of matches.
      if (!t.confirmed) {
        keep[static_cast<std::size_t>(ti)] = 0;
        continue;
      }
      t.age_missed += 1;
      t.hits = 0;
      if (t.age_missed > cfg_.max_mis) {
        keep[static_cast<std::size_t>(ti)] = 0;
        continue;
      }
      t.box_prev = t.box;
      t.yaw_prev = t.box.theta;
      t.box = predicted[static_cast<std::size_t>(ti)];
    }

    std::vector<Tracklet> alive;
    alive.reserve(tracklets_.size() + assoc.unmatched_detections.size());
    for (std::size_t i = 0; i < tracklets_.size(); ++i)
      if (keep[i]) alive.push_back(std::move(tracklets_[i]));
    for (int di : assoc.unmatched_detections) {
      const Detection& d = detections[static_cast<std::size_t>(di)];
      Tracklet t;
      t.id = next_id_++;
      t.box = d.box;
      t.confidence = d.confidence;
      t.category = d.category;
      t.hits = 1;
      t.provisional.push_back({frame, t.box, t.confidence});
      if (t.hits >= cfg_.min_det) confirm(t, out);
      alive.push_back(std::move(t));
    }
    tracklets_ = std::move(alive);

    for (const auto& t : tracklets_)
      if (t.confirmed) out.emitted.push_back({t.id, t.category, t.box, t.confidence});
    std::sort(out.emitted.begin(), out.emitted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
  }

 private:
  Box3D predict_tracklet(const Tracklet& t, const PointCloud& prev_cloud, const FlowField& flow, std::size_t& starved) const {
    if (cfg_.predictor == Predictor::constant_velocity) return predict_constant_velocity(t);
    const OffsetEstimate est = compute_offset(t, prev_cloud, flow);
    if (est.flow_starved()) {
      ++starved;
      return predict_constant_velocity(t);
    }
    return predict(t, est.offset);
  }

  void confirm(Tracklet& t, StepResult& out) const {
    t.confirmed = true;
    if (cfg_.backfill) {
      for (std::size_t k = 0; k + 1 < t.provisional.size(); ++k) {
        const auto& p = t.provisional[k];
        auto it = std::find_if(out.backfill.begin(), out.backfill.end(), [&](const FrameTracks& f) { return f.frame == p.frame; });
        if (it == out.backfill.end()) {
          out.backfill.push_back({p.frame, {}});
          it = std::prev(out.backfill.end());
        }
        it->tracks.push_back({t.id, t.category, p.box, p.confidence});
      }
      std::sort(out.backfill.begin(), out.backfill.end(), [](const auto& a, const auto& b) { return a.frame < b.frame; });
    }
    t.provisional.clear();
  }

  TrackerConfig cfg_;
  std::vector<Tracklet> tracklets_;
  int next_id_ = 0;
};

}  // namespace sfmot
