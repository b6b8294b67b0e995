// Synthetic driving scenes with complete ground truth (boxes, instance
// labels, rigid motions, noisy detections) and frame-rate decimation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sfmot/errors.hpp"
#include "sfmot/flow.hpp"
#include "sfmot/geometry.hpp"
#include "sfmot/io_util.hpp"
#include "sfmot/kitti_io.hpp"
#include "sfmot/point_cloud.hpp"

namespace sfmot {

struct Waypoint {
  double frame = 0;
  double x = 0, y = 0;
};

struct Pose2 {
  double x = 0, y = 0, yaw = 0;
};

/// A box moving on the ground plane. Either a waypoint list (linear
/// interpolation, heading along the segment) or a start pose with speed,
/// acceleration and a constant turn rate; all rates are per frame.
struct SimObject {
  int id = 0;
  std::string category = "Car";
  double l = 3.9, w = 1.6, h = 1.5;
  Pose2 start;
  double speed = 0;
  double accel = 0;
  double turn_rate = 0;
  std::vector<Waypoint> waypoints;

  Pose2 pose(double t) const {
    if (!waypoints.empty()) return waypoint_pose(t);
    const double yaw = start.yaw + turn_rate * t;
    if (std::abs(turn_rate) < 1e-12) {
      const double s = speed * t + 0.5 * accel * t * t;
      return {start.x + s * std::cos(start.yaw), start.y + s * std::sin(start.yaw), normalize_angle(yaw)};
    }
    const double w = turn_rate;
    auto fx = [&](double tau) {
      const double phi = start.yaw + w * tau;
      return (speed + accel * tau) * std::sin(phi) / w + accel * std::cos(phi) / (w * w);
    };
    auto fy = [&](double tau) {
      const double phi = start.yaw + w * tau;
      return -(speed + accel * tau) * std::cos(phi) / w + accel * std::sin(phi) / (w * w);
    };
    return {start.x + fx(t) - fx(0), start.y + fy(t) - fy(0), normalize_angle(yaw)};
  }

 private:
  Pose2 waypoint_pose(double t) const {
    const auto& wp = waypoints;
    if (wp.size() == 1 || t <= wp.front().frame) return {wp.front().x, wp.front().y, segment_yaw(0)};
    for (std::size_t i = 0; i + 1 < wp.size(); ++i) {
      if (t <= wp[i + 1].frame) {
        const double span = wp[i + 1].frame - wp[i].frame;
        const double a = span > 0 ? (t - wp[i].frame) / span : 1.0;
        return {wp[i].x + a * (wp[i + 1].x - wp[i].x), wp[i].y + a * (wp[i + 1].y - wp[i].y), segment_yaw(i)};
      }
    }
    return {wp.back().x, wp.back().y, segment_yaw(wp.size() - 2)};
  }

  // Heading of the first non-degenerate segment at or before `i`, else the start yaw.
  double segment_yaw(std::size_t i) const {
    for (std::size_t k = std::min(i, waypoints.size() - 1) + 1; k-- > 0;) {
      if (k + 1 >= waypoints.size()) continue;
      const double dx = waypoints[k + 1].x - waypoints[k].x, dy = waypoints[k + 1].y - waypoints[k].y;
      if (std::hypot(dx, dy) > 1e-12) return std::atan2(dy, dx);
    }
    return normalize_angle(start.yaw);
  }
};

struct SimNoise {
  double pos_sigma = 0;  // meters, per horizontal axis
  double yaw_sigma = 0;  // radians
  double fp_rate = 0;    // probability of one false positive per frame
  double fn_rate = 0;    // probability of dropping each true detection
};

struct Scenario {
  int frames = 30;
  std::uint64_t seed = 0;
  double ground_height = -1.73;
  int ground_points = 2000;
  int points_per_object = 200;
  double surface_inset = 0.95;  // object returns lie on a box shrunk by this factor
  double ground_x_min = -10, ground_x_max = 70, ground_half_width = 40;
  SimNoise noise;
  Calibration calib;
  int image_width = 1242, image_height = 375;
  std::vector<SimObject> objects;

  void validate() const {
    if (frames < 0) throw ConfigError("scenario: frames must be >= 0");
    if (ground_points < 0 || points_per_object < 0) throw ConfigError("scenario: point counts must be >= 0");
    if (!(surface_inset > 0 && surface_inset <= 1)) throw ConfigError("scenario: surface_inset must lie in (0, 1]");
    for (double r : {noise.fp_rate, noise.fn_rate})
      if (!(r >= 0 && r <= 1)) throw ConfigError("scenario: rates must lie in [0, 1]");
    if (!(noise.pos_sigma >= 0 && noise.yaw_sigma >= 0)) throw ConfigError("scenario: noise sigmas must be >= 0");
    std::set<int> ids;
    for (const auto& o : objects) {
      if (!(o.l > 0 && o.w > 0 && o.h > 0)) throw ConfigError(fmt::format("scenario: object {} has non-positive size", o.id));
      if (o.id < 0 || !ids.insert(o.id).second) throw ConfigError(fmt::format("scenario: object id {} invalid or repeated", o.id));
      for (std::size_t i = 1; i < o.waypoints.size(); ++i)
        if (o.waypoints[i].frame < o.waypoints[i - 1].frame)
          throw ConfigError(fmt::format("scenario: object {} waypoints must be in frame order", o.id));
    }
  }

  Box3D box_at(const SimObject& o, int frame) const {
    const Pose2 p = o.pose(frame);
    return {p.x, p.y, ground_height + 0.5 * o.h, o.l, o.w, o.h, p.yaw};
  }

  /// Center projects inside the (unexpanded) image with positive depth.
  bool in_view(const Box3D& b) const {
    const Eigen::Vector3d uvz = calib.project_rect(calib.to_rect(b.center()));
    return uvz.z() > 0 && uvz.x() >= 0 && uvz.x() <= image_width && uvz.y() >= 0 && uvz.y() <= image_height;
  }
};

/// One frame of a sequence. Clouds and motions are optional so real KITTI
/// directories (no instance labels, no motions) share the representation.
struct SequenceFrame {
  int index = 0;
  std::optional<PointCloud> cloud;
  std::vector<LabelRow> gt;
  std::vector<LabelRow> detections;
  std::optional<MotionMap> motions;  // from the previous frame; absent for the first
};

struct Sequence {
  Calibration calib;
  std::vector<SequenceFrame> frames;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Surface samples (local frame) on the top and four side faces of a box.
inline std::vector<Vec3> sample_box_surface(double l, double w, double h, int n, std::mt19937_64& rng) {
  const double top = l * w, sx = w * h, sy = l * h;
  const double total = top + 2 * sx + 2 * sy;
  std::uniform_real_distribution<double> u(-0.5, 0.5), pick(0.0, total);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double a = pick(rng);
    const double p = u(rng), q = u(rng);
    if ((a -= top) < 0) pts.emplace_back(p * l, q * w, 0.5 * h);
    else if ((a -= sx) < 0) pts.emplace_back(0.5 * l, p * w, q * h);
    else if ((a -= sx) < 0) pts.emplace_back(-0.5 * l, p * w, q * h);
    else if ((a -= sy) < 0) pts.emplace_back(p * l, 0.5 * w, q * h);
    else pts.emplace_back(p * l, -0.5 * w, q * h);
  }
  return pts;
}

inline RigidMotion pose_motion(const Box3D& from, const Box3D& to) {
  RigidMotion m;
  m.rotation = Eigen::AngleAxisd(to.theta - from.theta, Vec3::UnitZ()).toRotationMatrix();
  m.translation = to.center() - m.rotation * from.center();
  return m;
}

}  // namespace detail

/// Generates every frame of the scenario; deterministic for a fixed seed.
inline Sequence generate(const Scenario& sc) {
  sc.validate();
  Sequence seq{sc.calib, {}};
  std::mt19937_64 obj_rng(detail::mix_seed(sc.seed, 0xB0B));
  struct Local {
    std::vector<Vec3> pts;
    std::vector<float> intensity;
  };
  std::vector<Local> locals;
  for (const auto& o : sc.objects) {
    Local lc;
    lc.pts = detail::sample_box_surface(o.l * sc.surface_inset, o.w * sc.surface_inset, o.h * sc.surface_inset,
                                        sc.points_per_object, obj_rng);
    std::uniform_real_distribution<float> ui(0.2f, 0.9f);
    for (std::size_t i = 0; i < lc.pts.size(); ++i) lc.intensity.push_back(ui(obj_rng));
    locals.push_back(std::move(lc));
  }

  const double hfov = std::atan(std::max(sc.calib.p2()(0, 2), sc.image_width - sc.calib.p2()(0, 2)) / sc.calib.p2()(0, 0));
  std::vector<Box3D> prev_boxes;
  for (int t = 0; t < sc.frames; ++t) {
    std::mt19937_64 rng(detail::mix_seed(sc.seed, static_cast<std::uint64_t>(t) + 1));
    SequenceFrame fr;
    fr.index = t;

    std::vector<Vec3> pts;
    std::vector<float> inten;
    std::vector<PointLabel> labels;
    std::uniform_real_distribution<double> gx(sc.ground_x_min, sc.ground_x_max), gy(-sc.ground_half_width, sc.ground_half_width);
    std::uniform_real_distribution<float> gi(0.0f, 0.3f);
    for (int i = 0; i < sc.ground_points; ++i) {
      pts.emplace_back(gx(rng), gy(rng), sc.ground_height);
      inten.push_back(gi(rng));
      labels.emplace_back();
    }

    std::vector<Box3D> boxes;
    for (std::size_t k = 0; k < sc.objects.size(); ++k) {
      const auto& o = sc.objects[k];
      const Box3D b = sc.box_at(o, t);
      boxes.push_back(b);
      const RigidMotion place = RigidMotion::yaw_about(Vec3::Zero(), b.theta, b.center());
      for (std::size_t i = 0; i < locals[k].pts.size(); ++i) {
        pts.push_back(place.apply(locals[k].pts[i]));
        inten.push_back(locals[k].intensity[i]);
        labels.push_back(PointLabel::instance(o.id));
      }
    }
    Eigen::MatrixXf feat(static_cast<Eigen::Index>(inten.size()), 1);
    for (std::size_t i = 0; i < inten.size(); ++i) feat(static_cast<Eigen::Index>(i), 0) = inten[i];
    fr.cloud = PointCloud(std::move(pts), std::move(feat), std::move(labels));

    if (t > 0) {
      MotionMap mm;
      for (std::size_t k = 0; k < sc.objects.size(); ++k) mm[sc.objects[k].id] = detail::pose_motion(prev_boxes[k], boxes[k]);
      fr.motions = std::move(mm);
    }

    std::normal_distribution<double> npos(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t k = 0; k < sc.objects.size(); ++k) {
      const auto& o = sc.objects[k];
      const Box3D& b = boxes[k];
      if (!sc.in_view(b)) continue;
      fr.gt.push_back(label_from_box(t, o.id, o.category, b, sc.calib));
      // Draw every variate unconditionally so noise settings do not shift the stream.
      const double drop = u01(rng), ex = npos(rng), ey = npos(rng), eyaw = npos(rng), score = 0.5 + 0.5 * u01(rng);
      if (drop < sc.noise.fn_rate) continue;
      Box3D db = b;
      if (sc.noise.pos_sigma > 0 || sc.noise.yaw_sigma > 0)
        db = Box3D(b.x + sc.noise.pos_sigma * ex, b.y + sc.noise.pos_sigma * ey, b.z, b.l, b.w, b.h, b.theta + sc.noise.yaw_sigma * eyaw);
      fr.detections.push_back(label_from_box(t, -1, o.category, db, sc.calib, score));
    }
    const double fp_draw = u01(rng);
    const double fd = 5.0 + 45.0 * u01(rng), fa = (2.0 * u01(rng) - 1.0) * 0.9 * hfov, fyaw = (2.0 * u01(rng) - 1.0) * std::numbers::pi;
    const double fscore = 0.6 * u01(rng);
    if (fp_draw < sc.noise.fp_rate) {
      const Box3D fb(fd, fd * std::tan(fa), sc.ground_height + 0.75, 3.9, 1.6, 1.5, fyaw);
      fr.detections.push_back(label_from_box(t, -1, "Car", fb, sc.calib, fscore));
    }
    prev_boxes = std::move(boxes);
    seq.frames.push_back(std::move(fr));
  }
  return seq;
}

struct DecimateSpec {
  int stride = 1;
  int offset = 0;  // keep frames with index % stride == offset

  static DecimateSpec even() { return {2, 0}; }
  static DecimateSpec odd() { return {2, 1}; }
};

struct DecimateResult {
  Sequence sequence;
  bool empty = false;  // nothing kept
};

/// Keeps the selected frames and re-indexes them densely. Motions of dropped
/// frames are composed into the next kept frame; the first kept frame has none.
inline DecimateResult decimate(const Sequence& in, DecimateSpec spec) {
  if (spec.stride < 1 || spec.offset < 0 || spec.offset >= spec.stride) throw ConfigError("decimate: invalid stride/offset");
  DecimateResult out{{in.calib, {}}, false};
  // Motion accumulated since the last kept frame; empty optional = identity so far.
  std::optional<MotionMap> acc;
  bool broken = false;
  for (std::size_t i = 0; i < in.frames.size(); ++i) {
    const SequenceFrame& f = in.frames[i];
    if (!out.sequence.frames.empty()) {
      if (!f.motions) {
        broken = true;
      } else if (!acc) {
        acc = *f.motions;
      } else {
        MotionMap composed;
        for (const auto& [id, m] : *f.motions)
          if (const auto it = acc->find(id); it != acc->end()) composed[id] = it->second.then(m);
        acc = std::move(composed);
      }
    }
    if (static_cast<int>(i) % spec.stride != spec.offset) continue;

    SequenceFrame k = f;
    k.index = static_cast<int>(out.sequence.frames.size());
    for (auto& r : k.gt) r.frame = k.index;
    for (auto& r : k.detections) r.frame = k.index;
    k.motions = (!out.sequence.frames.empty() && !broken) ? acc : std::nullopt;
    out.sequence.frames.push_back(std::move(k));
    acc.reset();
    broken = false;
  }
  out.empty = out.sequence.frames.empty();
  return out;
}

// ---- scenario files ----------------------------------------------------------
//
//   frames 30
//   seed 7
//   det_pos_sigma 0.1
//   object
//     id 0
//     category Car
//     size 3.9 1.6 1.5
//     start 10 -3 0
//     speed 1.0
//   end

inline Scenario parse_scenario(std::string_view text, const std::string& source = "<memory>") {
  Scenario sc;
  std::optional<SimObject> obj;
  const auto lines = io::split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::string_view line = lines[ln];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = io::split_ws(line);
    if (tok.empty()) continue;
    auto fail = [&](const std::string& what) { return ParseError(fmt::format("{}:{}: {}", source, ln + 1, what)); };
    auto nums = [&](std::size_t n) {
      if (tok.size() != n + 1) throw fail(fmt::format("'{}' expects {} value(s)", tok[0], n));
      std::vector<double> v;
      for (std::size_t i = 1; i <= n; ++i) {
        const auto d = io::parse_double(tok[i]);
        if (!d || !std::isfinite(*d)) throw fail(fmt::format("bad number '{}'", tok[i]));
        v.push_back(*d);
      }
      return v;
    };
    const std::string_view key = tok[0];

    if (obj) {
      if (key == "end") {
        sc.objects.push_back(*obj);
        obj.reset();
      } else if (key == "id") {
        obj->id = static_cast<int>(nums(1)[0]);
      } else if (key == "category") {
        if (tok.size() != 2) throw fail("'category' expects one value");
        obj->category = std::string(tok[1]);
      } else if (key == "size") {
        const auto v = nums(3);
        obj->l = v[0], obj->w = v[1], obj->h = v[2];
      } else if (key == "start") {
        const auto v = nums(3);
        obj->start = {v[0], v[1], v[2]};
      } else if (key == "speed") {
        obj->speed = nums(1)[0];
      } else if (key == "accel") {
        obj->accel = nums(1)[0];
      } else if (key == "turn_rate") {
        obj->turn_rate = nums(1)[0];
      } else if (key == "waypoint") {
        const auto v = nums(3);
        obj->waypoints.push_back({v[0], v[1], v[2]});
      } else {
        throw fail(fmt::format("unknown object key '{}'", key));
      }
      continue;
    }

    if (key == "object") {
      obj = SimObject{};
      obj->id = static_cast<int>(sc.objects.size());
    } else if (key == "frames") {
      sc.frames = static_cast<int>(nums(1)[0]);
    } else if (key == "seed") {
      if (tok.size() != 2) throw fail("'seed' expects one value");
      const auto s = io::parse_int(tok[1]);
      if (!s || *s < 0) throw fail("seed must be a non-negative integer");
      sc.seed = static_cast<std::uint64_t>(*s);
    } else if (key == "ground_height") {
      sc.ground_height = nums(1)[0];
    } else if (key == "ground_points") {
      sc.ground_points = static_cast<int>(nums(1)[0]);
    } else if (key == "points_per_object") {
      sc.points_per_object = static_cast<int>(nums(1)[0]);
    } else if (key == "surface_inset") {
      sc.surface_inset = nums(1)[0];
    } else if (key == "ground_extent") {
      const auto v = nums(3);
      sc.ground_x_min = v[0], sc.ground_x_max = v[1], sc.ground_half_width = v[2];
    } else if (key == "det_pos_sigma") {
      sc.noise.pos_sigma = nums(1)[0];
    } else if (key == "det_yaw_sigma") {
      sc.noise.yaw_sigma = nums(1)[0];
    } else if (key == "fp_rate") {
      sc.noise.fp_rate = nums(1)[0];
    } else if (key == "fn_rate") {
      sc.noise.fn_rate = nums(1)[0];
    } else if (key == "image_size") {
      const auto v = nums(2);
      sc.image_width = static_cast<int>(v[0]), sc.image_height = static_cast<int>(v[1]);
    } else {
      throw fail(fmt::format("unknown key '{}'", key));
    }
  }
  if (obj) throw ParseError(fmt::format("{}: object block not closed with 'end'", source));
  sc.validate();
  return sc;
}

inline Scenario read_scenario(const std::filesystem::path& path) { return parse_scenario(io::read_text(path), path.string()); }

/// Five cars in view for 30 frames: two oncoming, one turning, one
/// accelerating, one parked.
inline Scenario demo_scenario(std::uint64_t seed = 7) {
  Scenario sc;
  sc.frames = 30;
  sc.seed = seed;
  auto car = [](int id, Pose2 start, double speed, double accel = 0, double turn = 0) {
    SimObject o;
    o.id = id;
    o.start = start;
    o.speed = speed;
    o.accel = accel;
    o.turn_rate = turn;
    return o;
  };
  sc.objects = {
      car(0, {12, -2.0, 0.0}, 1.0),
      car(1, {55, 3.5, std::numbers::pi}, 0.8),
      car(2, {20, 6.0, -0.05}, 0.6, 0.0, 0.004),
      car(3, {8, -7.0, 0.0}, 0.3, 0.03),
      car(4, {30, -10.0, std::numbers::pi / 2}, 0.0),
  };
  return sc;
}

// ---- sequence directories ----------------------------------------------------
//
//   calib.txt, label.txt (ground truth), det.txt (detections with score),
//   velodyne/NNNNNN.bin, point_labels/NNNNNN.bin (i32 per point),
//   motions/NNNNNN.txt (id r00..r22 tx ty tz; motion from the previous frame)

inline std::vector<char> encode_point_labels(const PointCloud& c) {
  std::vector<char> out;
  out.reserve(4 * c.size());
  for (const auto& l : c.labels) io::put_i32(out, l.code());
  return out;
}

inline std::string format_motions(const MotionMap& mm) {
  std::string s;
  for (const auto& [id, m] : mm) {
    s += fmt::format("{}", id);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s += fmt::format(" {:.17g}", m.rotation(i, j));
    for (int i = 0; i < 3; ++i) s += fmt::format(" {:.17g}", m.translation[i]);
    s += '\n';
  }
  return s;
}

inline MotionMap parse_motions(std::string_view text, const std::string& source) {
  MotionMap mm;
  const auto lines = io::split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto tok = io::split_ws(lines[ln]);
    if (tok.empty()) continue;
    if (tok.size() != 13) throw ParseError(fmt::format("{}:{}: expected 13 columns", source, ln + 1));
    const auto id = io::parse_int(tok[0]);
    if (!id) throw ParseError(fmt::format("{}:{}: bad instance id", source, ln + 1));
    RigidMotion m;
    for (std::size_t k = 1; k < 13; ++k) {
      const auto v = io::parse_double(tok[k]);
      if (!v) throw ParseError(fmt::format("{}:{}: bad number '{}'", source, ln + 1, tok[k]));
      if (k <= 9) m.rotation((k - 1) / 3, (k - 1) % 3) = *v;
      else m.translation[static_cast<Eigen::Index>(k - 10)] = *v;
    }
    mm[static_cast<int>(*id)] = m;
  }
  return mm;
}

inline std::string frame_file(int frame, const char* ext) { return fmt::format("{:06d}{}", frame, ext); }

inline void write_sequence(const std::filesystem::path& dir, const Sequence& seq) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_calib(dir / "calib.txt", seq.calib);
  std::vector<LabelRow> gt, det;
  for (const auto& f : seq.frames) {
    gt.insert(gt.end(), f.gt.begin(), f.gt.end());
    det.insert(det.end(), f.detections.begin(), f.detections.end());
    if (f.cloud) {
      write_velodyne(dir / "velodyne" / frame_file(f.index, ".bin"), *f.cloud);
      bool any_label = false;
      for (const auto& l : f.cloud->labels) any_label = any_label || l.kind() != PointLabel::Kind::unlabeled;
      if (any_label) io::write_bytes(dir / "point_labels" / frame_file(f.index, ".bin"), encode_point_labels(*f.cloud));
    }
    if (f.motions) io::write_text(dir / "motions" / frame_file(f.index, ".txt"), format_motions(*f.motions));
  }
  write_labels(dir / "label.txt", gt);
  write_labels(dir / "det.txt", det);
}

/// Reads a sequence directory; missing optional parts stay absent.
/// The frame count is the largest frame referenced by any file.
inline Sequence read_sequence(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Sequence seq;
  if (fs::exists(dir / "calib.txt")) seq.calib = read_calib(dir / "calib.txt");
  const FrameLabels gt = fs::exists(dir / "label.txt") ? read_labels(dir / "label.txt") : FrameLabels{};
  const FrameLabels det = fs::exists(dir / "det.txt") ? read_labels(dir / "det.txt") : FrameLabels{};

  int frames = 0;
  if (!gt.empty()) frames = std::max(frames, gt.rbegin()->first + 1);
  if (!det.empty()) frames = std::max(frames, det.rbegin()->first + 1);
  for (const char* sub : {"velodyne", "motions"}) {
    if (!fs::is_directory(dir / sub)) continue;
    for (const auto& e : fs::directory_iterator(dir / sub)) {
      const auto n = io::parse_int(e.path().stem().string());
      if (n && *n >= 0) frames = std::max(frames, static_cast<int>(*n) + 1);
    }
  }

  for (int t = 0; t < frames; ++t) {
    SequenceFrame f;
    f.index = t;
    if (auto it = gt.find(t); it != gt.end()) f.gt = it->second;
    if (auto it = det.find(t); it != det.end()) f.detections = it->second;
    const fs::path cloud_path = dir / "velodyne" / frame_file(t, ".bin");
    if (fs::exists(cloud_path)) {
      PointCloud c = read_velodyne(cloud_path);
      const fs::path lbl_path = dir / "point_labels" / frame_file(t, ".bin");
      if (fs::exists(lbl_path)) {
        const auto bytes = io::read_bytes(lbl_path);
        if (bytes.size() != 4 * c.size())
          throw ParseError(fmt::format("{}: {} labels for {} points", lbl_path.string(), bytes.size() / 4, c.size()));
        for (std::size_t i = 0; i < c.size(); ++i) c.labels[i] = PointLabel::from_code(io::get_i32(bytes.data() + 4 * i));
      }
      f.cloud = std::move(c);
    }
    const fs::path mpath = dir / "motions" / frame_file(t, ".txt");
    if (fs::exists(mpath)) f.motions = parse_motions(io::read_text(mpath), mpath.string());
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace sfmot
