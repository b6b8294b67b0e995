// Per-frame scene conditioning: camera-frustum crop with a widened field of
// view, consensus ground-plane labeling, and fixed-size random sampling.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sfmot/errors.hpp"
#include "sfmot/kitti_io.hpp"
#include "sfmot/point_cloud.hpp"

namespace sfmot {

struct Frustum {
  Calibration calib;
  int image_width = 1242;
  int image_height = 375;
  double expansion_margin_deg = 10.0;  // half-angle widening per side
  double max_depth = 80.0;             // image-plane depth cutoff, meters
  double depth_margin = 20.0;          // kept beyond max_depth

  void validate() const {
    if (image_width <= 0 || image_height <= 0) throw ConfigError("frustum: image bounds must be positive");
    if (!(expansion_margin_deg >= 0)) throw ConfigError("frustum: expansion margin must be >= 0");
    if (!(max_depth > 0) || !(depth_margin >= 0)) throw ConfigError("frustum: invalid depth limits");
  }
};

/// Indices of the points whose projection falls inside the widened image.
inline std::vector<std::size_t> fov_indices(const PointCloud& cloud, const Frustum& fr) {
  fr.validate();
  const auto& p2 = fr.calib.p2();
  const double fx = p2(0, 0), fy = p2(1, 1), cx = p2(0, 2), cy = p2(1, 2);
  const double margin = fr.expansion_margin_deg * std::numbers::pi / 180.0;
  const double left = std::atan((0.0 - cx) / fx) - margin;
  const double right = std::atan((fr.image_width - cx) / fx) + margin;
  const double upper = std::atan((0.0 - cy) / fy) - margin;
  const double lower = std::atan((fr.image_height - cy) / fy) + margin;
  const double depth_limit = fr.max_depth + fr.depth_margin;

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d uvz = fr.calib.project_rect(fr.calib.to_rect(cloud.positions[i]));
    if (!(uvz.z() > 0) || uvz.z() > depth_limit) continue;
    const double az = std::atan((uvz.x() - cx) / fx);
    const double el = std::atan((uvz.y() - cy) / fy);
    if (az >= left && az <= right && el >= upper && el <= lower) keep.push_back(i);
  }
  return keep;
}

inline PointCloud filter_fov(const PointCloud& cloud, const Frustum& fr) {
  const auto idx = fov_indices(cloud, fr);
  return cloud.select(idx);
}

struct GroundConfig {
  double inlier_threshold = 0.15;
  int iterations = 200;
  double min_inlier_fraction = 0.25;
  std::uint64_t seed = 0;
};

struct GroundFit {
  PointCloud cloud;
  bool found = false;
  Eigen::Vector4d plane = Eigen::Vector4d::Zero();  // n.x + d = 0, |n| = 1
  std::size_t inliers = 0;
};

namespace detail {

inline std::size_t count_inliers(const std::vector<Vec3>& pts, const Eigen::Vector4d& plane, double thr) {
  std::size_t n = 0;
  for (const auto& p : pts)
    if (std::abs(plane.head<3>().dot(p) + plane[3]) <= thr) ++n;
  return n;
}

inline bool plane_from(const Vec3& a, const Vec3& b, const Vec3& c, Eigen::Vector4d& out) {
  Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  if (!(len > 1e-12)) return false;
  n /= len;
  out << n, -n.dot(a);
  return true;
}

inline Eigen::Vector4d refit_plane(const std::vector<Vec3>& pts, const Eigen::Vector4d& plane, double thr) {
  Vec3 mean = Vec3::Zero();
  std::size_t n = 0;
  for (const auto& p : pts)
    if (std::abs(plane.head<3>().dot(p) + plane[3]) <= thr) {
      mean += p;
      ++n;
    }
  if (n < 3) return plane;
  mean /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts)
    if (std::abs(plane.head<3>().dot(p) + plane[3]) <= thr) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Vec3 normal = es.eigenvectors().col(0);
  if (normal.dot(plane.head<3>()) < 0) normal = -normal;
  Eigen::Vector4d out;
  out << normal, -normal.dot(mean);
  return out;
}

}  // namespace detail

/// Labels the dominant plane as ground. Coordinates and non-unlabeled tags
/// are never modified; when no plane reaches the inlier fraction the cloud is
/// returned unchanged with `found == false`.
inline GroundFit fit_ground(const PointCloud& cloud, const GroundConfig& cfg = {}) {
  if (cloud.size() < 3) throw InputError("fit_ground: need at least 3 points");
  if (!(cfg.inlier_threshold >= 0) || cfg.iterations < 1 || !(cfg.min_inlier_fraction >= 0 && cfg.min_inlier_fraction <= 1))
    throw ConfigError("fit_ground: invalid configuration");

  const auto& pts = cloud.positions;
  const std::size_t n = pts.size();
  Eigen::Vector4d best = Eigen::Vector4d::Zero();
  std::size_t best_count = 0;
  auto consider = [&](std::size_t i, std::size_t j, std::size_t k) {
    Eigen::Vector4d pl;
    if (!detail::plane_from(pts[i], pts[j], pts[k], pl)) return;
    const std::size_t c = detail::count_inliers(pts, pl, cfg.inlier_threshold);
    if (c > best_count) {
      best_count = c;
      best = pl;
    }
  };

  const double triplets = static_cast<double>(n) * static_cast<double>(n - 1) * static_cast<double>(n - 2) / 6.0;
  if (triplets <= cfg.iterations) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        for (std::size_t k = j + 1; k < n; ++k) consider(i, j, k);
  } else {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int it = 0; it < cfg.iterations; ++it) {
      const std::size_t i = pick(rng);
      std::size_t j = pick(rng), k = pick(rng);
      if (i == j || j == k || i == k) continue;
      consider(i, j, k);
    }
  }

  GroundFit out{cloud, false, best, best_count};
  if (best_count == 0) return out;
  const Eigen::Vector4d refined = detail::refit_plane(pts, best, cfg.inlier_threshold);
  const std::size_t refined_count = detail::count_inliers(pts, refined, cfg.inlier_threshold);
  if (refined_count >= best_count) {
    out.plane = refined;
    out.inliers = refined_count;
  }
  if (static_cast<double>(out.inliers) < cfg.min_inlier_fraction * static_cast<double>(n)) return out;

  out.found = true;
  for (std::size_t i = 0; i < n; ++i)
    if (out.cloud.labels[i].kind() == PointLabel::Kind::unlabeled &&
        std::abs(out.plane.head<3>().dot(pts[i]) + out.plane[3]) <= cfg.inlier_threshold)
      out.cloud.labels[i] = PointLabel::ground();
  return out;
}

struct SampleResult {
  PointCloud cloud;
  std::vector<std::size_t> indices;  // into the input cloud, ascending
  bool fell_back = false;            // no non-ground points; sampled from everything
};

/// Uniform sample without replacement of min(n, pool) non-ground points.
inline SampleResult sample_points(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_points: n must be >= 1");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (!cloud.labels[i].is_ground()) pool.push_back(i);
  SampleResult out;
  if (pool.empty()) {
    out.fell_back = true;
    pool.resize(cloud.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  }
  if (n >= pool.size()) {
    out.indices = std::move(pool);
  } else {
    std::mt19937_64 rng(seed);
    out.indices.reserve(n);
    std::sample(pool.begin(), pool.end(), std::back_inserter(out.indices), n, rng);
  }
  out.cloud = cloud.select(out.indices);
  return out;
}

}  // namespace sfmot
