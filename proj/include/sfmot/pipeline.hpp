// End-to-end sequence processing: preprocessing, flow, tracking and result
// collection, plus the key-value tracker configuration file.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sfmot/errors.hpp"
#include "sfmot/flow.hpp"
#include "sfmot/io_util.hpp"
#include "sfmot/kitti_io.hpp"
#include "sfmot/preprocess.hpp"
#include "sfmot/sim.hpp"
#include "sfmot/tracker.hpp"

namespace sfmot {

enum class FlowSource { oracle, nn, file };

inline FlowSource parse_flow_source(std::string_view s) {
  if (s == "oracle") return FlowSource::oracle;
  if (s == "nn") return FlowSource::nn;
  if (s == "file") return FlowSource::file;
  throw ConfigError(fmt::format("unknown flow source '{}' (oracle|nn|file)", s));
}

inline Predictor parse_predictor(std::string_view s) {
  if (s == "flow") return Predictor::flow;
  if (s == "cv") return Predictor::constant_velocity;
  throw ConfigError(fmt::format("unknown predictor '{}' (flow|cv)", s));
}

inline std::string to_string(FlowSource s) {
  switch (s) {
    case FlowSource::oracle: return "oracle";
    case FlowSource::nn: return "nn";
    case FlowSource::file: return "file";
  }
  return "?";
}

inline std::string to_string(Predictor p) { return p == Predictor::flow ? "flow" : "cv"; }

struct PipelineConfig {
  TrackerConfig tracker;
  FlowSource flow_source = FlowSource::oracle;
  std::string category = "Car";
  std::size_t sample_count = 6000;
  bool crop_fov = true;
  double expansion_margin_deg = 10.0;
  double max_depth = 80.0;
  double depth_margin = 20.0;
  GroundConfig ground;
  NearestNeighborConfig nn;
  std::uint64_t seed = 0;
};

/// Parses `key = value` lines ('#' starts a comment). Unknown keys are errors.
inline PipelineConfig parse_config(std::string_view text, PipelineConfig cfg = {}, const std::string& source = "<memory>") {
  const auto lines = io::split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::string_view line = lines[ln];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    const auto head = io::split_ws(line.substr(0, eq == std::string_view::npos ? line.size() : eq));
    if (head.empty() && eq == std::string_view::npos) continue;
    auto fail = [&](const std::string& what) { return ConfigError(fmt::format("{}:{}: {}", source, ln + 1, what)); };
    if (eq == std::string_view::npos || head.size() != 1) throw fail("expected 'key = value'");
    const auto vals = io::split_ws(line.substr(eq + 1));
    if (vals.size() != 1) throw fail("expected exactly one value");
    const std::string_view key = head[0], val = vals[0];
    auto num = [&] {
      const auto v = io::parse_double(val);
      if (!v) throw fail(fmt::format("bad number '{}'", val));
      return *v;
    };
    auto integer = [&] {
      const auto v = io::parse_int(val);
      if (!v) throw fail(fmt::format("bad integer '{}'", val));
      return *v;
    };
    auto boolean = [&] {
      if (val == "true" || val == "1") return true;
      if (val == "false" || val == "0") return false;
      throw fail(fmt::format("bad boolean '{}'", val));
    };
    if (key == "iou_min") cfg.tracker.iou_min = num();
    else if (key == "max_mis") cfg.tracker.max_mis = static_cast<int>(integer());
    else if (key == "min_det") cfg.tracker.min_det = static_cast<int>(integer());
    else if (key == "backfill") cfg.tracker.backfill = boolean();
    else if (key == "predictor") cfg.tracker.predictor = parse_predictor(val);
    else if (key == "flow_source") cfg.flow_source = parse_flow_source(val);
    else if (key == "category") cfg.category = std::string(val);
    else if (key == "sample_points") cfg.sample_count = static_cast<std::size_t>(integer());
    else if (key == "crop_fov") cfg.crop_fov = boolean();
    else if (key == "expansion_margin_deg") cfg.expansion_margin_deg = num();
    else if (key == "max_depth") cfg.max_depth = num();
    else if (key == "depth_margin") cfg.depth_margin = num();
    else if (key == "ground_threshold") cfg.ground.inlier_threshold = num();
    else if (key == "ground_iterations") cfg.ground.iterations = static_cast<int>(integer());
    else if (key == "ground_min_inlier_fraction") cfg.ground.min_inlier_fraction = num();
    else if (key == "max_match_distance") cfg.nn.max_match_distance = num();
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
    else throw fail(fmt::format("unknown key '{}'", key));
  }
  cfg.tracker.validate();
  return cfg;
}

inline PipelineConfig read_config(const std::filesystem::path& path, PipelineConfig base = {}) {
  return parse_config(io::read_text(path), std::move(base), path.string());
}

struct PreparedFrame {
  PointCloud sampled;
  bool ground_found = false;
  bool sample_fell_back = false;
};

/// Crop, ground labeling and sampling of one frame's cloud.
inline PreparedFrame prepare_cloud(const PointCloud& raw, const Calibration& calib, const PipelineConfig& cfg, int frame) {
  PreparedFrame out;
  PointCloud cloud = raw;
  if (cfg.crop_fov) {
    Frustum fr{calib};
    fr.expansion_margin_deg = cfg.expansion_margin_deg;
    fr.max_depth = cfg.max_depth;
    fr.depth_margin = cfg.depth_margin;
    cloud = filter_fov(cloud, fr);
  }
  if (cloud.size() >= 3) {
    GroundConfig g = cfg.ground;
    g.seed = detail::mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(frame));
    GroundFit fit = fit_ground(cloud, g);
    out.ground_found = fit.found;
    cloud = std::move(fit.cloud);
  }
  if (cloud.empty()) return out;
  SampleResult s = sample_points(cloud, cfg.sample_count, detail::mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(frame) + 1));
  out.sample_fell_back = s.fell_back;
  out.sampled = std::move(s.cloud);
  return out;
}

struct SequenceStats {
  std::size_t frames = 0;
  std::size_t flow_starved = 0;
  std::size_t frames_without_ground = 0;
  std::size_t sample_fallbacks = 0;
};

struct SequenceResult {
  std::vector<FrameTracks> frames;  // one entry per input frame
  SequenceStats stats;
};

/// Runs the tracker over a sequence. `flow_dir` is required for FlowSource::file.
inline SequenceResult run_sequence(const Sequence& seq, const PipelineConfig& cfg,
                                   const std::optional<std::filesystem::path>& flow_dir = std::nullopt) {
  cfg.tracker.validate();
  const bool use_flow = cfg.tracker.predictor == Predictor::flow;
  if (use_flow && cfg.flow_source == FlowSource::file && !flow_dir) throw ConfigError("flow_source=file needs a flow directory");

  Tracker tracker(cfg.tracker);
  SequenceResult res;
  res.frames.resize(seq.frames.size());
  std::optional<PreparedFrame> prev;

  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const SequenceFrame& f = seq.frames[i];
    const int t = f.index;
    res.frames[i].frame = t;

    std::vector<Detection> dets;
    for (const auto& r : f.detections)
      if (r.category == cfg.category) dets.push_back({box_from_label(r, seq.calib), r.score.value_or(1.0), r.category});

    PointCloud prev_cloud;
    FlowField flow;
    std::optional<PreparedFrame> cur;
    if (use_flow) {
      if (cfg.flow_source != FlowSource::file) {
        if (!f.cloud) throw InputError(fmt::format("frame {}: point cloud missing", t));
        cur = prepare_cloud(*f.cloud, seq.calib, cfg, t);
        res.stats.frames_without_ground += cur->ground_found ? 0 : 1;
        res.stats.sample_fallbacks += cur->sample_fell_back ? 1 : 0;
      }
      if (i > 0) {
        switch (cfg.flow_source) {
          case FlowSource::oracle:
            if (!f.motions) throw InputError(fmt::format("frame {}: oracle flow needs instance motions", t));
            prev_cloud = prev->sampled;
            flow = estimate_oracle(prev_cloud, *f.motions);
            break;
          case FlowSource::nn:
            prev_cloud = prev->sampled;
            flow = NearestNeighborFlowEstimator(cfg.nn).estimate({prev_cloud, cur->sampled, t, nullptr});
            break;
          case FlowSource::file: {
            FlowFile ff = read_flow_file(flow_path(*flow_dir, t), t);
            prev_cloud = ff.source_cloud();
            flow = std::move(ff.flow);
            break;
          }
        }
      }
    }

    StepResult step = tracker.step(t, dets, prev_cloud, flow);
    res.stats.flow_starved += step.flow_starved;
    res.frames[i].tracks = std::move(step.emitted);
    for (auto& bf : step.backfill) {
      auto it = std::find_if(res.frames.begin(), res.frames.begin() + static_cast<std::ptrdiff_t>(i),
                             [&](const FrameTracks& ft) { return ft.frame == bf.frame; });
      if (it == res.frames.begin() + static_cast<std::ptrdiff_t>(i)) continue;
      it->tracks.insert(it->tracks.end(), bf.tracks.begin(), bf.tracks.end());
      std::sort(it->tracks.begin(), it->tracks.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    }
    prev = std::move(cur);
  }
  res.stats.frames = seq.frames.size();
  return res;
}

/// Tracker output as KITTI label rows, keyed by frame.
inline FrameLabels results_to_labels(const std::vector<FrameTracks>& frames, const Calibration& calib) {
  FrameLabels out;
  for (const auto& f : frames) {
    auto& rows = out[f.frame];
    for (const auto& t : f.tracks) rows.push_back(label_from_box(f.frame, t.id, t.category, t.box, calib, t.confidence));
  }
  return out;
}

inline FrameLabels ground_truth_labels(const Sequence& seq) {
  FrameLabels out;
  for (const auto& f : seq.frames) out[f.index] = f.gt;
  return out;
}

/// Writes oracle flow files for every frame pair, computed over the same
/// preprocessed samples run_sequence would draw.
inline void export_oracle_flow(const std::filesystem::path& dir, const Sequence& seq, const PipelineConfig& cfg) {
  std::optional<PreparedFrame> prev;
  for (const auto& f : seq.frames) {
    if (!f.cloud) throw InputError(fmt::format("frame {}: point cloud missing", f.index));
    PreparedFrame cur = prepare_cloud(*f.cloud, seq.calib, cfg, f.index);
    if (prev) {
      if (!f.motions) throw InputError(fmt::format("frame {}: instance motions missing", f.index));
      const FlowField flow = estimate_oracle(prev->sampled, *f.motions);
      write_flow(flow_path(dir, f.index), prev->sampled.positions, flow);
    }
    prev = std::move(cur);
  }
}

}  // namespace sfmot
