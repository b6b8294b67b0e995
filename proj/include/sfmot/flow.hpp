// Scene flow: per-point displacement of the previous frame's points, behind a
// single estimator interface (simulator oracle, nearest-neighbour baseline,
// precomputed network output read from disk).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "sfmot/errors.hpp"
#include "sfmot/io_util.hpp"
#include "sfmot/kdtree.hpp"
#include "sfmot/point_cloud.hpp"

namespace sfmot {

/// p' = R p + t.
struct RigidMotion {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  /// Motion equivalent to applying `*this` first and then `next`.
  RigidMotion then(const RigidMotion& next) const {
    return {next.rotation * rotation, next.rotation * translation + next.translation};
  }

  /// Rotation by `yaw` about the vertical axis through `pivot`, then translation by `shift`.
  static RigidMotion yaw_about(const Vec3& pivot, double yaw, const Vec3& shift = Vec3::Zero()) {
    RigidMotion m;
    m.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    m.translation = pivot - m.rotation * pivot + shift;
    return m;
  }
};

/// Per-instance motion between two consecutive frames.
using MotionMap = std::map<int, RigidMotion>;

/// One displacement per source point, index-aligned with the previous frame's sampled cloud.
struct FlowField {
  std::vector<Vec3> vectors;

  std::size_t size() const { return vectors.size(); }
  bool empty() const { return vectors.empty(); }

  void validate() const {
    for (std::size_t i = 0; i < vectors.size(); ++i)
      if (!vectors[i].allFinite()) throw InputError(fmt::format("flow: non-finite vector at index {}", i));
  }

  void check_aligned(const PointCloud& source) const {
    if (vectors.size() != source.size())
      throw ContractViolation(fmt::format("flow has {} vectors but the source cloud has {} points", vectors.size(), source.size()));
  }
};

struct FlowRequest {
  const PointCloud& prev;
  const PointCloud& curr;
  int frame = 0;                       // index of `curr`
  const MotionMap* motions = nullptr;  // oracle only
};

class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual FlowField estimate(const FlowRequest& req) const = 0;
  virtual std::string name() const = 0;
};

/// Exact flow from known per-instance rigid motions; non-instance points are static.
inline FlowField estimate_oracle(const PointCloud& prev, const MotionMap& motions) {
  FlowField f;
  f.vectors.resize(prev.size(), Vec3::Zero());
  for (std::size_t i = 0; i < prev.size(); ++i) {
    const auto& lbl = prev.labels[i];
    if (!lbl.is_instance()) continue;
    const auto it = motions.find(lbl.instance_id());
    if (it == motions.end()) throw InputError(fmt::format("oracle flow: no motion for instance {}", lbl.instance_id()));
    const Vec3& p = prev.positions[i];
    f.vectors[i] = it->second.apply(p) - p;
  }
  return f;
}

struct NearestNeighborConfig {
  double max_match_distance = 3.0;
};

/// flow_i = NN(curr, p_i) - p_i within the match radius, zero otherwise.
inline FlowField estimate_nn(const PointCloud& prev, const PointCloud& curr, const NearestNeighborConfig& cfg = {}) {
  if (prev.empty() || curr.empty()) throw InputError("nearest-neighbour flow: both clouds must be non-empty");
  const KdTree3 tree(curr.positions);
  FlowField f;
  f.vectors.resize(prev.size(), Vec3::Zero());
  for (std::size_t i = 0; i < prev.size(); ++i) {
    const auto hit = tree.nearest(prev.positions[i]);
    if (hit && hit->distance <= cfg.max_match_distance) f.vectors[i] = curr.positions[hit->index] - prev.positions[i];
  }
  return f;
}

// ---- flow files --------------------------------------------------------------
// Little-endian: "SFL1", u32 count N, then N x 6 f32 (x, y, z, dx, dy, dz).

inline constexpr char kFlowMagic[4] = {'S', 'F', 'L', '1'};
inline constexpr double kFlowAlignmentTolerance = 1e-4;

struct FlowFile {
  std::vector<Vec3> source;
  FlowField flow;

  PointCloud source_cloud() const { return PointCloud(source); }
};

inline std::filesystem::path flow_path(const std::filesystem::path& dir, int frame) {
  return dir / fmt::format("{:06d}.sfl", frame);
}

inline std::vector<char> encode_flow(std::span<const Vec3> source, const FlowField& flow) {
  if (source.size() != flow.size()) throw ContractViolation("encode_flow: source/flow length mismatch");
  std::vector<char> out(kFlowMagic, kFlowMagic + 4);
  io::put_u32(out, static_cast<std::uint32_t>(source.size()));
  for (std::size_t i = 0; i < source.size(); ++i) {
    for (int k = 0; k < 3; ++k) io::put_f32(out, static_cast<float>(source[i][k]));
    for (int k = 0; k < 3; ++k) io::put_f32(out, static_cast<float>(flow.vectors[i][k]));
  }
  return out;
}

inline FlowFile decode_flow(const std::vector<char>& bytes, int frame) {
  auto fail = [&](const std::string& what) { return ParseError(fmt::format("flow file for frame {}: {}", frame, what)); };
  if (bytes.size() < 8 || !std::equal(kFlowMagic, kFlowMagic + 4, bytes.begin())) throw fail("bad magic");
  const std::uint32_t n = io::get_u32(bytes.data() + 4);
  const std::size_t payload = bytes.size() - 8;
  if (payload != static_cast<std::size_t>(n) * 24)
    throw fail(fmt::format("declared {} points but payload holds {} values", n, payload / 4));
  FlowFile ff;
  ff.source.resize(n);
  ff.flow.vectors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = bytes.data() + 8 + 24 * i;
    ff.source[i] = Vec3(io::get_f32(p), io::get_f32(p + 4), io::get_f32(p + 8));
    ff.flow.vectors[i] = Vec3(io::get_f32(p + 12), io::get_f32(p + 16), io::get_f32(p + 20));
    if (!ff.source[i].allFinite() || !ff.flow.vectors[i].allFinite()) throw fail(fmt::format("non-finite value in record {}", i));
  }
  return ff;
}

inline void write_flow(const std::filesystem::path& path, std::span<const Vec3> source, const FlowField& flow) {
  io::write_bytes(path, encode_flow(source, flow));
}

inline FlowFile read_flow_file(const std::filesystem::path& path, int frame) {
  if (!std::filesystem::exists(path))
    throw InputError(fmt::format("flow file for frame {} not found: {}", frame, path.string()));
  return decode_flow(io::read_bytes(path), frame);
}

/// Loads a flow field; when `reference` is given its points must match the
/// stored source coordinates within kFlowAlignmentTolerance.
inline FlowField load_flow(const std::filesystem::path& path, int frame, const PointCloud* reference = nullptr) {
  FlowFile ff = read_flow_file(path, frame);
  if (reference) {
    if (reference->size() != ff.source.size())
      throw ParseError(fmt::format("flow file for frame {}: {} points, sampled cloud has {}", frame, ff.source.size(), reference->size()));
    for (std::size_t i = 0; i < ff.source.size(); ++i)
      if ((ff.source[i] - reference->positions[i]).cwiseAbs().maxCoeff() > kFlowAlignmentTolerance)
        throw ParseError(fmt::format("flow file for frame {}: source point {} deviates from the sampled cloud", frame, i));
  }
  return std::move(ff.flow);
}

// ---- estimator implementations ----------------------------------------------

class OracleFlowEstimator final : public FlowEstimator {
 public:
  FlowField estimate(const FlowRequest& req) const override {
    if (!req.motions) throw InputError(fmt::format("oracle flow for frame {}: no instance motions available", req.frame));
    return estimate_oracle(req.prev, *req.motions);
  }
  std::string name() const override { return "oracle"; }
};

class NearestNeighborFlowEstimator final : public FlowEstimator {
 public:
  explicit NearestNeighborFlowEstimator(NearestNeighborConfig cfg = {}) : cfg_(cfg) {}
  FlowField estimate(const FlowRequest& req) const override {
    if (req.prev.empty()) return {};
    if (req.curr.empty()) {
      FlowField f;
      f.vectors.assign(req.prev.size(), Vec3::Zero());
      return f;
    }
    return estimate_nn(req.prev, req.curr, cfg_);
  }
  std::string name() const override { return "nn"; }

 private:
  NearestNeighborConfig cfg_;
};

/// Reads `<dir>/<frame>.sfl` and checks it against the request's previous cloud.
class FileFlowEstimator final : public FlowEstimator {
 public:
  explicit FileFlowEstimator(std::filesystem::path dir) : dir_(std::move(dir)) {}
  FlowField estimate(const FlowRequest& req) const override { return load_flow(flow_path(dir_, req.frame), req.frame, &req.prev); }
  std::string name() const override { return "file"; }
  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace sfmot
