#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "sfmot/geometry.hpp"

namespace sfmot {

/// Per-point tag: unlabeled, ground, or an object instance.
class PointLabel {
 public:
  enum class Kind : std::uint8_t { unlabeled, ground, instance };

  constexpr PointLabel() = default;
  static constexpr PointLabel ground() { return PointLabel(Kind::ground, 0); }
  static PointLabel instance(std::int32_t id) {
    if (id < 0) throw std::invalid_argument("PointLabel: negative instance id");
    return PointLabel(Kind::instance, id);
  }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_ground() const { return kind_ == Kind::ground; }
  constexpr bool is_instance() const { return kind_ == Kind::instance; }
  constexpr std::int32_t instance_id() const { return id_; }

  /// Compact integer code: -1 unlabeled, -2 ground, id >= 0 instance.
  constexpr std::int32_t code() const {
    return kind_ == Kind::instance ? id_ : (kind_ == Kind::ground ? -2 : -1);
  }
  static PointLabel from_code(std::int32_t c) {
    if (c >= 0) return instance(c);
    if (c == -2) return ground();
    if (c == -1) return {};
    throw std::invalid_argument("PointLabel: invalid label code");
  }

  friend constexpr bool operator==(const PointLabel&, const PointLabel&) = default;

 private:
  constexpr PointLabel(Kind k, std::int32_t id) : kind_(k), id_(id) {}
  Kind kind_ = Kind::unlabeled;
  std::int32_t id_ = 0;
};

/// Frame points: positions, an N x c feature block and one label per point.
struct PointCloud {
  std::vector<Vec3> positions;
  Eigen::MatrixXf features;  // N x c, c may be 0
  std::vector<PointLabel> labels;

  PointCloud() : features(0, 0) {}

  explicit PointCloud(std::vector<Vec3> pts, Eigen::MatrixXf feats = {}, std::vector<PointLabel> lbls = {})
      : positions(std::move(pts)), features(std::move(feats)), labels(std::move(lbls)) {
    if (features.size() == 0) features.resize(static_cast<Eigen::Index>(positions.size()), 0);
    if (labels.empty()) labels.resize(positions.size());
    validate();
  }

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  Eigen::Index feature_dim() const { return features.cols(); }

  void validate() const {
    if (static_cast<std::size_t>(features.rows()) != positions.size())
      throw std::invalid_argument("PointCloud: features not row-aligned with positions");
    if (labels.size() != positions.size()) throw std::invalid_argument("PointCloud: label count mismatch");
    for (const auto& p : positions)
      if (!p.allFinite()) throw std::invalid_argument("PointCloud: non-finite position");
  }

  /// Rows `idx` in the given order.
  PointCloud select(std::span<const std::size_t> idx) const {
    PointCloud out;
    out.positions.reserve(idx.size());
    out.labels.reserve(idx.size());
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t i = idx[k];
      out.positions.push_back(positions.at(i));
      out.labels.push_back(labels[i]);
      if (features.cols() > 0) out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(i));
    }
    return out;
  }
};

}  // namespace sfmot
