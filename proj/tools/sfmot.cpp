// sfmot: track, eval, sim and decimate subcommands.
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "sfmot/errors.hpp"
#include "sfmot/io_util.hpp"
#include "sfmot/kitti_io.hpp"
#include "sfmot/metrics.hpp"
#include "sfmot/pipeline.hpp"
#include "sfmot/sim.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

json config_json(const sfmot::PipelineConfig& c) {
  return {{"iou_min", c.tracker.iou_min},
          {"max_mis", c.tracker.max_mis},
          {"min_det", c.tracker.min_det},
          {"backfill", c.tracker.backfill},
          {"predictor", sfmot::to_string(c.tracker.predictor)},
          {"flow_source", sfmot::to_string(c.flow_source)},
          {"category", c.category},
          {"sample_points", c.sample_count},
          {"crop_fov", c.crop_fov},
          {"expansion_margin_deg", c.expansion_margin_deg},
          {"max_depth", c.max_depth},
          {"depth_margin", c.depth_margin},
          {"ground_threshold", c.ground.inlier_threshold},
          {"ground_iterations", c.ground.iterations},
          {"ground_min_inlier_fraction", c.ground.min_inlier_fraction},
          {"max_match_distance", c.nn.max_match_distance},
          {"seed", c.seed}};
}

void write_manifest(const fs::path& out, const std::string& command, const std::vector<std::string>& argv, json config,
                    json inputs, std::uint64_t seed, json timings, json extra = json::object()) {
  json m = {{"command", command}, {"argv", argv},     {"config", std::move(config)}, {"inputs", std::move(inputs)},
            {"seed", seed},       {"version", kVersion}, {"timings_s", std::move(timings)}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  sfmot::io::write_text(out / "manifest.json", m.dump(2) + "\n");
}

// ---- track -------------------------------------------------------------------

struct TrackArgs {
  std::vector<std::string> sequences;
  std::string scenario;
  std::string detections, clouds, calib, name;
  std::string flow_source, flow_dir, predictor, config, category;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct TrackJob {
  std::string name;
  std::string source;
  std::optional<fs::path> flow_dir;
  std::function<sfmot::Sequence()> load;
};

sfmot::Sequence load_kitti_inputs(const TrackArgs& a) {
  sfmot::Sequence seq;
  if (!a.calib.empty()) seq.calib = sfmot::read_calib(a.calib);
  const sfmot::FrameLabels det = sfmot::read_labels(a.detections);
  int frames = det.empty() ? 0 : det.rbegin()->first + 1;
  if (!a.clouds.empty()) {
    if (!fs::is_directory(a.clouds)) throw sfmot::InputError(fmt::format("clouds directory not found: {}", a.clouds));
    for (const auto& e : fs::directory_iterator(a.clouds))
      if (e.path().extension() == ".bin")
        if (const auto n = sfmot::io::parse_int(e.path().stem().string()); n && *n >= 0)
          frames = std::max(frames, static_cast<int>(*n) + 1);
  }
  for (int t = 0; t < frames; ++t) {
    sfmot::SequenceFrame f;
    f.index = t;
    if (auto it = det.find(t); it != det.end()) f.detections = it->second;
    if (!a.clouds.empty()) {
      const fs::path p = fs::path(a.clouds) / sfmot::frame_file(t, ".bin");
      if (fs::exists(p)) f.cloud = sfmot::read_velodyne(p);
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

/// Fails before any tracking when file flow is selected and a frame's file is absent.
void check_flow_files(const sfmot::Sequence& seq, const fs::path& dir, const std::string& name) {
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    const int t = seq.frames[i].index;
    if (!fs::exists(sfmot::flow_path(dir, t)))
      throw sfmot::InputError(fmt::format("{}: flow file for frame {} not found: {}", name, t, sfmot::flow_path(dir, t).string()));
  }
}

int cmd_track(const TrackArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = Clock::now();
  sfmot::PipelineConfig cfg;
  if (!a.config.empty()) cfg = sfmot::read_config(a.config, cfg);
  if (!a.flow_source.empty()) cfg.flow_source = sfmot::parse_flow_source(a.flow_source);
  if (!a.predictor.empty()) cfg.tracker.predictor = sfmot::parse_predictor(a.predictor);
  if (!a.category.empty()) cfg.category = a.category;
  if (a.seed) cfg.seed = *a.seed;

  std::vector<TrackJob> jobs;
  for (const auto& dir : a.sequences) {
    if (!fs::is_directory(dir)) throw sfmot::InputError(fmt::format("sequence directory not found: {}", dir));
    std::optional<fs::path> fd;
    if (!a.flow_dir.empty()) fd = fs::path(a.flow_dir);
    else if (fs::is_directory(fs::path(dir) / "flow")) fd = fs::path(dir) / "flow";
    jobs.push_back({fs::path(dir).lexically_normal().filename().string(), dir, fd, [dir] { return sfmot::read_sequence(dir); }});
    if (jobs.back().name.empty()) jobs.back().name = fs::path(dir).lexically_normal().parent_path().filename().string();
  }
  if (!a.scenario.empty()) {
    const std::string path = a.scenario;
    jobs.push_back({fs::path(path).stem().string(), path, a.flow_dir.empty() ? std::nullopt : std::optional<fs::path>(a.flow_dir),
                    [path] { return sfmot::generate(sfmot::read_scenario(path)); }});
  }
  if (!a.detections.empty()) {
    const TrackArgs copy = a;
    jobs.push_back({a.name.empty() ? fs::path(a.detections).stem().string() : a.name, a.detections,
                    a.flow_dir.empty() ? std::nullopt : std::optional<fs::path>(a.flow_dir), [copy] { return load_kitti_inputs(copy); }});
  } else if (!a.clouds.empty() || !a.calib.empty()) {
    throw sfmot::ConfigError("--clouds/--calib need --detections");
  }
  if (jobs.empty()) throw sfmot::ConfigError("no input: give --sequence, --scenario or --detections");
  for (std::size_t i = 0; i < jobs.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (jobs[i].name == jobs[j].name) throw sfmot::ConfigError(fmt::format("two inputs share the output name '{}'", jobs[i].name));

  const bool file_flow = cfg.tracker.predictor == sfmot::Predictor::flow && cfg.flow_source == sfmot::FlowSource::file;
  struct Outcome {
    sfmot::SequenceStats stats;
    double seconds = 0;
  };
  std::vector<std::future<Outcome>> futures;
  for (const auto& job : jobs) {
    futures.push_back(std::async(std::launch::async, [&cfg, &a, job, file_flow] {
      const auto s0 = Clock::now();
      const sfmot::Sequence seq = job.load();
      if (file_flow) {
        if (!job.flow_dir) throw sfmot::ConfigError(fmt::format("{}: flow source 'file' needs --flow-dir", job.name));
        check_flow_files(seq, *job.flow_dir, job.name);
      }
      const sfmot::SequenceResult res = sfmot::run_sequence(seq, cfg, job.flow_dir);
      sfmot::write_results(fs::path(a.out) / (job.name + ".txt"), res.frames, seq.calib);
      return Outcome{res.stats, seconds_since(s0)};
    }));
  }

  json inputs = json::array(), timings = json::object(), stats = json::object();
  std::exception_ptr first_error;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    try {
      const Outcome o = futures[i].get();
      timings[jobs[i].name] = o.seconds;
      stats[jobs[i].name] = {{"frames", o.stats.frames},
                             {"flow_starved", o.stats.flow_starved},
                             {"frames_without_ground", o.stats.frames_without_ground},
                             {"sample_fallbacks", o.stats.sample_fallbacks}};
      if (o.stats.frames_without_ground > 0) warn(fmt::format("{}: no ground plane found in {} frame(s)", jobs[i].name, o.stats.frames_without_ground));
      if (o.stats.sample_fallbacks > 0) warn(fmt::format("{}: {} frame(s) sampled from ground points only", jobs[i].name, o.stats.sample_fallbacks));
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
    json in = {{"name", jobs[i].name}, {"source", jobs[i].source}};
    if (jobs[i].flow_dir) in["flow_dir"] = jobs[i].flow_dir->string();
    inputs.push_back(std::move(in));
  }
  if (first_error) std::rethrow_exception(first_error);
  timings["total"] = seconds_since(t0);
  write_manifest(a.out, "track", argv, config_json(cfg), inputs, cfg.seed, timings, {{"stats", stats}});
  std::cout << fmt::format("tracked {} sequence(s) into {}\n", jobs.size(), a.out);
  return 0;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> gt, results;
  std::vector<double> thresholds{0.25, 0.7};
  std::string category = "Car";
  int recall_steps = 40;
  std::optional<int> frames;
  bool integrated_fn = false;
  std::string out;
};

/// Ground truth may be a label file or a sequence directory (label.txt plus
/// velodyne/, whose file count fixes the sequence length).
std::pair<sfmot::FrameLabels, std::optional<int>> load_gt(const fs::path& p) {
  if (!fs::is_directory(p)) return {sfmot::read_labels(p), std::nullopt};
  const sfmot::FrameLabels gt = sfmot::read_labels(p / "label.txt");
  int frames = gt.empty() ? 0 : gt.rbegin()->first + 1;
  if (fs::is_directory(p / "velodyne"))
    for (const auto& e : fs::directory_iterator(p / "velodyne"))
      if (const auto n = sfmot::io::parse_int(e.path().stem().string()); n && *n >= 0) frames = std::max(frames, static_cast<int>(*n) + 1);
  return {gt, frames};
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = Clock::now();
  if (a.gt.size() != a.results.size()) throw sfmot::ConfigError("give one --results per --gt");
  if (a.gt.empty()) throw sfmot::ConfigError("no input: give --gt and --results");
  std::vector<sfmot::EvalSequence> seqs;
  for (std::size_t i = 0; i < a.gt.size(); ++i) {
    auto [gt, frames] = load_gt(a.gt[i]);
    if (a.frames) frames = a.frames;
    seqs.push_back(sfmot::make_eval_sequence(gt, sfmot::read_labels(a.results[i]), a.category, true, frames));
  }
  std::vector<std::pair<double, sfmot::MetricsReport>> sections;
  for (double thres : a.thresholds) {
    sfmot::EvalConfig cfg;
    cfg.iou_thres = thres;
    cfg.category = a.category;
    cfg.num_recall_steps = a.recall_steps;
    cfg.smota = a.integrated_fn ? sfmot::SmotaVariant::integrated_fn : sfmot::SmotaVariant::printed;
    sections.emplace_back(thres, sfmot::recall_sweep(seqs, cfg));
  }
  const std::string table = sfmot::format_report_table(a.category, sections);
  std::cout << table;
  if (!a.out.empty()) {
    sfmot::io::write_text(fs::path(a.out) / "report.txt", table);
    sfmot::io::write_text(fs::path(a.out) / "report_kv.txt", sfmot::format_report_kv(a.category, sections));
    json cfg = {{"iou_thres", a.thresholds},
                {"category", a.category},
                {"num_recall_steps", a.recall_steps},
                {"smota", a.integrated_fn ? "integrated_fn" : "printed"}};
    write_manifest(a.out, "eval", argv, cfg, {{"gt", a.gt}, {"results", a.results}}, 0, {{"total", seconds_since(t0)}});
  }
  return 0;
}

// ---- sim / decimate ----------------------------------------------------------

struct SimArgs {
  std::string scenario, out, config;
  std::optional<std::uint64_t> seed;
  bool export_flow = false;
};

int cmd_sim(const SimArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = Clock::now();
  sfmot::Scenario sc = a.scenario.empty() ? sfmot::demo_scenario() : sfmot::read_scenario(a.scenario);
  if (a.seed) sc.seed = *a.seed;
  const sfmot::Sequence seq = sfmot::generate(sc);
  sfmot::write_sequence(a.out, seq);
  sfmot::PipelineConfig cfg;
  if (!a.config.empty()) cfg = sfmot::read_config(a.config, cfg);
  cfg.seed = sc.seed;
  if (a.export_flow) sfmot::export_oracle_flow(fs::path(a.out) / "flow", seq, cfg);
  json config = {{"frames", sc.frames}, {"objects", sc.objects.size()}, {"export_flow", a.export_flow}};
  if (a.export_flow) config["pipeline"] = config_json(cfg);
  write_manifest(a.out, "sim", argv, config, {{"scenario", a.scenario.empty() ? "<demo>" : a.scenario}}, sc.seed,
                 {{"total", seconds_since(t0)}});
  std::cout << fmt::format("wrote {} frames to {}\n", seq.frames.size(), a.out);
  return 0;
}

struct DecimateArgs {
  std::string in, out, keep = "even";
  int stride = 0, offset = 0;
};

int cmd_decimate(const DecimateArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = Clock::now();
  sfmot::DecimateSpec spec;
  if (a.stride > 0) spec = {a.stride, a.offset};
  else if (a.keep == "even") spec = sfmot::DecimateSpec::even();
  else if (a.keep == "odd") spec = sfmot::DecimateSpec::odd();
  else throw sfmot::ConfigError(fmt::format("--keep must be even or odd, got '{}'", a.keep));
  if (!fs::is_directory(a.in)) throw sfmot::InputError(fmt::format("input directory not found: {}", a.in));
  if (fs::is_directory(fs::path(a.in) / "flow")) warn("flow files are not carried over; re-export flow for the decimated sequence");

  const sfmot::DecimateResult res = sfmot::decimate(sfmot::read_sequence(a.in), spec);
  if (res.empty) warn(fmt::format("decimation of {} kept no frames", a.in));
  sfmot::write_sequence(a.out, res.sequence);
  write_manifest(a.out, "decimate", argv, {{"stride", spec.stride}, {"offset", spec.offset}}, {{"in", a.in}}, 0,
                 {{"total", seconds_since(t0)}}, {{"frames", res.sequence.frames.size()}});
  std::cout << fmt::format("kept {} frames\n", res.sequence.frames.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Scene-flow driven 3D multi-object tracking, evaluation and simulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TrackArgs ta;
  auto* track = app.add_subcommand("track", "Track sequences and write KITTI result files");
  track->add_option("--sequence", ta.sequences, "Sequence directory (repeatable)")->check(CLI::ExistingDirectory);
  track->add_option("--scenario", ta.scenario, "Simulator scenario file")->check(CLI::ExistingFile);
  track->add_option("--detections", ta.detections, "KITTI tracking detections file")->check(CLI::ExistingFile);
  track->add_option("--clouds", ta.clouds, "Directory of velodyne .bin files");
  track->add_option("--calib", ta.calib, "KITTI calibration file")->check(CLI::ExistingFile);
  track->add_option("--name", ta.name, "Output name for --detections input");
  track->add_option("--flow-source", ta.flow_source, "oracle | nn | file")->check(CLI::IsMember({"oracle", "nn", "file"}));
  track->add_option("--flow-dir", ta.flow_dir, "Directory of .sfl flow files");
  track->add_option("--predictor", ta.predictor, "flow | cv")->check(CLI::IsMember({"flow", "cv"}));
  track->add_option("--config", ta.config, "Key-value configuration file")->check(CLI::ExistingFile);
  track->add_option("--category", ta.category, "Category to track");
  track->add_option("--seed", ta.seed, "Seed for sampling and ground fitting");
  track->add_option("--out", ta.out, "Output directory")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate result files against ground truth");
  eval->add_option("--gt", ea.gt, "Ground-truth label file or sequence directory (repeatable)")->required()->check(CLI::ExistingPath);
  eval->add_option("--results", ea.results, "Result file, paired with --gt in order")->required()->check(CLI::ExistingFile);
  eval->add_option("--iou-thres", ea.thresholds, "3D IoU matching threshold (repeatable)")->capture_default_str();
  eval->add_option("--category", ea.category, "Category to evaluate")->capture_default_str();
  eval->add_option("--recall-steps", ea.recall_steps, "Number of recall steps")->capture_default_str();
  eval->add_option("--frames", ea.frames, "Sequence length (defaults to the ground truth's)");
  eval->add_flag("--integrated-fn", ea.integrated_fn, "Use the integrated-FN sMOTA variant");
  eval->add_option("--out", ea.out, "Directory for report.txt and report_kv.txt");

  SimArgs sa;
  auto* sim = app.add_subcommand("sim", "Generate a synthetic sequence directory");
  sim->add_option("--scenario", sa.scenario, "Scenario file (default: built-in demo)")->check(CLI::ExistingFile);
  sim->add_option("--seed", sa.seed, "Override the scenario seed");
  sim->add_option("--config", sa.config, "Pipeline configuration used for --export-flow")->check(CLI::ExistingFile);
  sim->add_flag("--export-flow", sa.export_flow, "Also write oracle flow files to <out>/flow");
  sim->add_option("--out", sa.out, "Output directory")->required();

  DecimateArgs da;
  auto* dec = app.add_subcommand("decimate", "Keep a subset of frames and re-index them");
  dec->add_option("--in", da.in, "Input sequence directory")->required();
  dec->add_option("--out", da.out, "Output directory")->required();
  dec->add_option("--keep", da.keep, "even | odd")->capture_default_str();
  dec->add_option("--stride", da.stride, "Keep every n-th frame (overrides --keep)");
  dec->add_option("--offset", da.offset, "First kept frame with --stride");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*track) return cmd_track(ta, args);
    if (*eval) return cmd_eval(ea, args);
    if (*sim) return cmd_sim(sa, args);
    if (*dec) return cmd_decimate(da, args);
  } catch (const sfmot::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
