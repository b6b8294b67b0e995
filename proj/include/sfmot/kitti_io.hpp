// Readers and writers for KITTI tracking data: label/result text files,
// velodyne scans and calibration files.
#pragma once

#include <algorithm>
#include <array>
#include <tuple>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "sfmot/errors.hpp"
#include "sfmot/geometry.hpp"
#include "sfmot/io_util.hpp"
#include "sfmot/point_cloud.hpp"
#include "sfmot/track_types.hpp"

namespace sfmot {

using Mat34 = Eigen::Matrix<double, 3, 4>;

/// Sensor-to-image calibration: LiDAR -> rectified camera -> image.
class Calibration {
 public:
  Calibration() : Calibration(canonical_p2(), Eigen::Matrix3d::Identity(), canonical_velo_to_cam()) {}

  Calibration(const Mat34& p2, const Eigen::Matrix3d& r0_rect, const Mat34& tr_velo_to_cam)
      : p2_(p2), r0_(r0_rect), tr_(tr_velo_to_cam) {
    if (!p2_.allFinite() || !r0_.allFinite() || !tr_.allFinite())
      throw ConfigError("calibration: non-finite entries");
    Eigen::Matrix4d r0h = Eigen::Matrix4d::Identity();
    r0h.topLeftCorner<3, 3>() = r0_;
    Eigen::Matrix4d trh = Eigen::Matrix4d::Identity();
    trh.topRows<3>() = tr_;
    velo_to_rect_ = r0h * trh;
    const double det = velo_to_rect_.determinant();
    if (!(std::abs(det) > 1e-12)) throw ConfigError("calibration: LiDAR-to-camera transform is not invertible");
    rect_to_velo_ = velo_to_rect_.inverse();
    if (!(p2_(0, 0) > 0 && p2_(1, 1) > 0)) throw ConfigError("calibration: P2 focal lengths must be positive");
  }

  /// The synthetic rig used by the simulator: LiDAR x-forward/y-left/z-up,
  /// camera x-right/y-down/z-forward at the same origin.
  static Calibration canonical() { return {}; }

  const Mat34& p2() const { return p2_; }
  const Eigen::Matrix3d& r0_rect() const { return r0_; }
  const Mat34& tr_velo_to_cam() const { return tr_; }
  const Eigen::Matrix4d& velo_to_rect() const { return velo_to_rect_; }

  /// Composite LiDAR -> image projection P2 * R0 * Tr.
  Mat34 projection() const { return p2_ * velo_to_rect_; }

  Vec3 to_rect(const Vec3& velo) const { return (velo_to_rect_ * velo.homogeneous()).head<3>(); }
  Vec3 to_velo(const Vec3& rect) const { return (rect_to_velo_ * rect.homogeneous()).head<3>(); }
  Vec3 dir_to_rect(const Vec3& d) const { return velo_to_rect_.topLeftCorner<3, 3>() * d; }
  Vec3 dir_to_velo(const Vec3& d) const { return rect_to_velo_.topLeftCorner<3, 3>() * d; }

  /// Pixel coordinates and depth of a rectified-camera point.
  Eigen::Vector3d project_rect(const Vec3& rect) const {
    const Eigen::Vector3d uvw = p2_ * rect.homogeneous();
    return {uvw.x() / uvw.z(), uvw.y() / uvw.z(), uvw.z()};
  }

 private:
  static Mat34 canonical_p2() {
    Mat34 p;
    p << 721.5377, 0, 609.5593, 0,
         0, 721.5377, 172.854, 0,
         0, 0, 1, 0;
    return p;
  }
  static Mat34 canonical_velo_to_cam() {
    Mat34 t;
    t << 0, -1, 0, 0,
         0, 0, -1, 0,
         1, 0, 0, 0;
    return t;
  }

  Mat34 p2_;
  Eigen::Matrix3d r0_;
  Mat34 tr_;
  Eigen::Matrix4d velo_to_rect_;
  Eigen::Matrix4d rect_to_velo_;
};

/// One line of a KITTI tracking label or result file.
struct LabelRow {
  int frame = 0;
  int track_id = -1;
  std::string category = "Car";
  double truncated = 0;
  double occluded = 0;
  double alpha = 0;
  std::array<double, 4> bbox2d{0, 0, 0, 0};
  double h = 1, w = 1, l = 1;
  double x = 0, y = 0, z = 0;  // bottom-face center, rectified camera frame
  double rotation_y = 0;
  std::optional<double> score;
};

using FrameLabels = std::map<int, std::vector<LabelRow>>;

/// Column counts accepted for a label line: tracking format without and with score.
inline constexpr std::size_t kLabelColumns = 17;
inline constexpr std::size_t kLabelColumnsWithScore = 18;

inline FrameLabels parse_labels(std::string_view text, const std::string& source = "<memory>") {
  FrameLabels out;
  const auto lines = io::split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto tok = io::split_ws(lines[ln]);
    if (tok.empty()) continue;
    auto fail = [&](const std::string& what) {
      return ParseError(fmt::format("{}:{}: {}", source, ln + 1, what));
    };
    if (tok.size() != kLabelColumns && tok.size() != kLabelColumnsWithScore)
      throw fail(fmt::format("expected {} or {} columns, got {}", kLabelColumns, kLabelColumnsWithScore, tok.size()));

    auto num = [&](std::size_t i) {
      const auto v = io::parse_double(tok[i]);
      if (!v || !std::isfinite(*v)) throw fail(fmt::format("column {} is not a finite number: '{}'", i + 1, tok[i]));
      return *v;
    };
    auto integer = [&](std::size_t i) {
      const auto v = io::parse_int(tok[i]);
      if (!v) throw fail(fmt::format("column {} is not an integer: '{}'", i + 1, tok[i]));
      return static_cast<int>(*v);
    };

    LabelRow r;
    r.frame = integer(0);
    if (r.frame < 0) throw fail("negative frame index");
    r.track_id = integer(1);
    r.category = std::string(tok[2]);
    r.truncated = num(3);
    r.occluded = num(4);
    r.alpha = num(5);
    for (std::size_t k = 0; k < 4; ++k) r.bbox2d[k] = num(6 + k);
    r.h = num(10);
    r.w = num(11);
    r.l = num(12);
    r.x = num(13);
    r.y = num(14);
    r.z = num(15);
    r.rotation_y = num(16);
    if (tok.size() == kLabelColumnsWithScore) r.score = num(17);
    // DontCare regions carry placeholder geometry and never take part in tracking.
    if (r.category == "DontCare") continue;
    if (!(r.h > 0 && r.w > 0 && r.l > 0)) throw fail("box dimensions must be positive");
    out[r.frame].push_back(std::move(r));
  }
  return out;
}

inline FrameLabels read_labels(const std::filesystem::path& path) {
  return parse_labels(io::read_text(path), path.string());
}

namespace detail {
inline std::string fmt_passthrough(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e9) return fmt::format("{}", static_cast<long long>(v));
  return fmt::format("{:.6f}", v);
}
}  // namespace detail

inline std::string format_label(const LabelRow& r) {
  std::string s = fmt::format("{} {} {} {} {} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f}",
                              r.frame, r.track_id, r.category, detail::fmt_passthrough(r.truncated),
                              detail::fmt_passthrough(r.occluded), r.alpha, r.bbox2d[0], r.bbox2d[1], r.bbox2d[2],
                              r.bbox2d[3], r.h, r.w, r.l, r.x, r.y, r.z, r.rotation_y);
  if (r.score) s += fmt::format(" {:.6f}", *r.score);
  return s;
}

inline void write_labels(const std::filesystem::path& path, const std::vector<LabelRow>& rows) {
  std::string text;
  for (const auto& r : rows) {
    text += format_label(r);
    text += '\n';
  }
  io::write_text(path, text);
}

/// Tracker box (volumetric center, LiDAR frame) from a camera-frame label.
inline Box3D box_from_label(const LabelRow& r, const Calibration& calib) {
  const Vec3 center_rect{r.x, r.y - 0.5 * r.h, r.z};
  const Vec3 c = calib.to_velo(center_rect);
  const Vec3 heading = calib.dir_to_velo(Vec3{std::cos(r.rotation_y), 0.0, -std::sin(r.rotation_y)});
  return {c.x(), c.y(), c.z(), r.l, r.w, r.h, std::atan2(heading.y(), heading.x())};
}

/// Writes the box geometry of `b` into the camera-frame fields of `r`;
/// alpha and the 2D box are derived from the projection.
inline void set_label_geometry(LabelRow& r, const Box3D& b, const Calibration& calib) {
  const Vec3 center_rect = calib.to_rect(b.center());
  const Vec3 d = calib.dir_to_rect(Vec3{std::cos(b.theta), std::sin(b.theta), 0.0});
  r.h = b.h;
  r.w = b.w;
  r.l = b.l;
  r.x = center_rect.x();
  r.y = center_rect.y() + 0.5 * b.h;
  r.z = center_rect.z();
  r.rotation_y = normalize_angle(std::atan2(-d.z(), d.x()));
  r.alpha = normalize_angle(r.rotation_y - std::atan2(r.x, r.z));

  // 2D box: extent of the projected corners; zeros if any corner is behind the camera.
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  double umin = 1e18, vmin = 1e18, umax = -1e18, vmax = -1e18;
  bool visible = true;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) {
        const double lx = 0.5 * sx * b.l, ly = 0.5 * sy * b.w;
        const Vec3 p{b.x + c * lx - s * ly, b.y + s * lx + c * ly, b.z + 0.5 * sz * b.h};
        const Eigen::Vector3d uvz = calib.project_rect(calib.to_rect(p));
        if (uvz.z() <= 0) visible = false;
        umin = std::min(umin, uvz.x());
        umax = std::max(umax, uvz.x());
        vmin = std::min(vmin, uvz.y());
        vmax = std::max(vmax, uvz.y());
      }
  r.bbox2d = visible ? std::array<double, 4>{umin, vmin, umax, vmax} : std::array<double, 4>{0, 0, 0, 0};
}

inline LabelRow label_from_box(int frame, int track_id, const std::string& category, const Box3D& b,
                               const Calibration& calib, std::optional<double> score = std::nullopt) {
  LabelRow r;
  r.frame = frame;
  r.track_id = track_id;
  r.category = category;
  r.score = score;
  set_label_geometry(r, b, calib);
  return r;
}

/// Tracker output for one frame.
struct FrameTracks {
  int frame = 0;
  std::vector<EmittedTrack> tracks;
};

/// KITTI tracking result file (score column included), sorted by frame then id.
inline void write_results(const std::filesystem::path& path, const std::vector<FrameTracks>& frames,
                          const Calibration& calib) {
  std::vector<LabelRow> rows;
  for (const auto& f : frames)
    for (const auto& t : f.tracks) rows.push_back(label_from_box(f.frame, t.id, t.category, t.box, calib, t.confidence));
  std::stable_sort(rows.begin(), rows.end(), [](const LabelRow& a, const LabelRow& b) {
    return std::tie(a.frame, a.track_id) < std::tie(b.frame, b.track_id);
  });
  write_labels(path, rows);
}

/// Velodyne scan: N records of 4 little-endian f32 (x, y, z, intensity).
inline PointCloud parse_velodyne(const std::vector<char>& bytes, const std::string& source = "<memory>") {
  if (bytes.size() % 16 != 0)
    throw ParseError(fmt::format("{}: truncated velodyne file ({} bytes is not a multiple of 16)", source, bytes.size()));
  const std::size_t n = bytes.size() / 16;
  std::vector<Vec3> pts(n);
  Eigen::MatrixXf feat(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = bytes.data() + 16 * i;
    pts[i] = Vec3(io::get_f32(p), io::get_f32(p + 4), io::get_f32(p + 8));
    feat(static_cast<Eigen::Index>(i), 0) = io::get_f32(p + 12);
    if (!pts[i].allFinite()) throw ParseError(fmt::format("{}: non-finite coordinate at point {}", source, i));
  }
  return PointCloud(std::move(pts), std::move(feat));
}

inline PointCloud read_velodyne(const std::filesystem::path& path) {
  return parse_velodyne(io::read_bytes(path), path.string());
}

/// Writes x, y, z and the first feature column (intensity, 0 if absent).
inline void write_velodyne(const std::filesystem::path& path, const PointCloud& cloud) {
  std::vector<char> bytes;
  bytes.reserve(cloud.size() * 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions[i];
    io::put_f32(bytes, static_cast<float>(p.x()));
    io::put_f32(bytes, static_cast<float>(p.y()));
    io::put_f32(bytes, static_cast<float>(p.z()));
    io::put_f32(bytes, cloud.feature_dim() > 0 ? cloud.features(static_cast<Eigen::Index>(i), 0) : 0.0f);
  }
  io::write_bytes(path, bytes);
}

/// Parses KITTI calibration text. Accepts both the object-benchmark
/// (R0_rect, Tr_velo_to_cam) and tracking-benchmark (R_rect, Tr_velo_cam) keys.
inline Calibration parse_calib(std::string_view text, const std::string& source = "<memory>") {
  std::map<std::string, std::vector<double>, std::less<>> entries;
  const auto lines = io::split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    auto tok = io::split_ws(lines[ln]);
    if (tok.empty()) continue;
    std::string key(tok[0]);
    if (!key.empty() && key.back() == ':') key.pop_back();
    std::vector<double> vals;
    for (std::size_t i = 1; i < tok.size(); ++i) {
      const auto v = io::parse_double(tok[i]);
      if (!v) throw ParseError(fmt::format("{}:{}: bad number '{}' for key {}", source, ln + 1, tok[i], key));
      vals.push_back(*v);
    }
    entries[key] = std::move(vals);
  }

  auto find = [&](std::initializer_list<const char*> keys, std::size_t count) -> std::vector<double> {
    for (const char* k : keys) {
      auto it = entries.find(k);
      if (it == entries.end()) continue;
      if (it->second.size() != count)
        throw ParseError(fmt::format("{}: key {} needs {} values, got {}", source, k, count, it->second.size()));
      return it->second;
    }
    throw ParseError(fmt::format("{}: missing required calibration key {}", source, *keys.begin()));
  };

  const auto p2v = find({"P2"}, 12);
  const auto r0v = find({"R0_rect", "R_rect"}, 9);
  const auto trv = find({"Tr_velo_to_cam", "Tr_velo_cam"}, 12);
  Mat34 p2, tr;
  Eigen::Matrix3d r0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      p2(i, j) = p2v[static_cast<std::size_t>(4 * i + j)];
      tr(i, j) = trv[static_cast<std::size_t>(4 * i + j)];
    }
    for (int j = 0; j < 3; ++j) r0(i, j) = r0v[static_cast<std::size_t>(3 * i + j)];
  }
  return {p2, r0, tr};
}

inline Calibration read_calib(const std::filesystem::path& path) {
  return parse_calib(io::read_text(path), path.string());
}

inline void write_calib(const std::filesystem::path& path, const Calibration& c) {
  auto row = [](const auto& m) {
    std::string s;
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) s += fmt::format(" {:.12e}", m(i, j));
    return s;
  };
  std::string text;
  text += "P2:" + row(c.p2()) + "\n";
  text += "R0_rect:" + row(c.r0_rect()) + "\n";
  text += "Tr_velo_to_cam:" + row(c.tr_velo_to_cam()) + "\n";
  io::write_text(path, text);
}

}  // namespace sfmot
