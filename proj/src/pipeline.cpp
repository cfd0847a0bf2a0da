#include "rangeslam/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "rangeslam/error.hpp"

namespace rangeslam {

const char* to_string(EstimatorMode mode) {
  return mode == EstimatorMode::RangeSlam ? "range-slam" : "wls-baseline";
}

EstimatorMode parse_estimator_mode(const std::string& text) {
  if (text == "range-slam") return EstimatorMode::RangeSlam;
  if (text == "wls-baseline") return EstimatorMode::WlsBaseline;
  throw Error(ErrorKind::ConfigError, "unknown estimator mode '" + text + "'");
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); };
  if (sensor.window_size < 2) fail("sensor.window_size must be at least 2");
  if (sensor.smoothing_count < 1 || sensor.smoothing_count > sensor.window_size) {
    fail("sensor.smoothing_count must lie in [1, window_size]");
  }
  if (!(sensor.smoothing_ratio > 0.0 && sensor.smoothing_ratio < 1.0)) fail("sensor.smoothing_ratio must lie in (0, 1)");
  if (!(resolution > 0.0)) fail("grid.resolution must be positive");
  if (!(hits.p_free > 0.0 && hits.p_occupy > 0.0)) fail("grid.p_free and grid.p_occupy must be positive");
  if (!(hits.e_max > 0.0)) fail("grid.e_max must be positive");
  if (filter.min_component_area < 1) fail("grid.min_component_area must be at least 1");
  if (filter_every < 1) fail("grid.filter_every must be at least 1");
  if (!(oracle_confidence > 0.0)) fail("classifier.oracle_confidence must be positive");
  if (solver.max_iterations < 1 || !(solver.step_tolerance > 0.0) || !(solver.initial_damping > 0.0)) {
    fail("localizer solver settings must be positive");
  }
  if (agent_count && *agent_count < 1) fail("agents must be at least 1");
  try {
    weights.validate();
  } catch (const Error& e) {
    fail(std::string("localizer: ") + e.what());
  }
  if (!svm_model.empty() && !std::filesystem::exists(svm_model)) fail("svm model not found: " + svm_model.string());
  if (!channel_stats.empty() && !std::filesystem::exists(channel_stats)) {
    fail("channel stats not found: " + channel_stats.string());
  }
}

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorKind::ConfigError, where + " must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!keys.count(key)) throw Error(ErrorKind::ConfigError, "unknown key '" + key + "' in " + where);
  }
}

}  // namespace

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open " + path.string());
  PipelineConfig cfg;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  try {
    const json doc = json::parse(in);
    reject_unknown(doc, {"sensor", "classifier", "grid", "localizer", "mode", "metrics", "agents"}, "config");
    if (doc.contains("sensor")) {
      const auto& s = doc["sensor"];
      reject_unknown(s, {"window_size", "smoothing_count", "smoothing_ratio", "reset_after_rejections"}, "sensor");
      cfg.sensor.window_size = s.value("window_size", cfg.sensor.window_size);
      cfg.sensor.smoothing_count = s.value("smoothing_count", cfg.sensor.smoothing_count);
      cfg.sensor.smoothing_ratio = s.value("smoothing_ratio", cfg.sensor.smoothing_ratio);
      cfg.sensor.reset_after_rejections = s.value("reset_after_rejections", cfg.sensor.reset_after_rejections);
    }
    if (doc.contains("classifier")) {
      const auto& c = doc["classifier"];
      reject_unknown(c, {"model", "stats", "lambda", "oracle_confidence"}, "classifier");
      if (c.contains("model")) cfg.svm_model = resolve(c["model"].get<std::string>());
      if (c.contains("stats")) cfg.channel_stats = resolve(c["stats"].get<std::string>());
      cfg.weights.lambda = c.value("lambda", cfg.weights.lambda);
      cfg.oracle_confidence = c.value("oracle_confidence", cfg.oracle_confidence);
    }
    if (doc.contains("grid")) {
      const auto& g = doc["grid"];
      reject_unknown(g,
                     {"resolution", "p_free", "p_occupy", "e_max", "min_component_area", "filter_every",
                      "nlos_exemption"},
                     "grid");
      cfg.resolution = g.value("resolution", cfg.resolution);
      cfg.hits.p_free = g.value("p_free", cfg.hits.p_free);
      cfg.hits.p_occupy = g.value("p_occupy", cfg.hits.p_occupy);
      cfg.hits.e_max = g.value("e_max", cfg.hits.e_max);
      cfg.filter.min_component_area = g.value("min_component_area", cfg.filter.min_component_area);
      cfg.filter_every = g.value("filter_every", cfg.filter_every);
      const auto exemption = g.value("nlos_exemption", std::string("filtered"));
      if (exemption == "filtered") cfg.exemption = NlosExemption::FilteredMap;
      else if (exemption == "live") cfg.exemption = NlosExemption::LiveEvidence;
      else throw Error(ErrorKind::ConfigError, "unknown grid.nlos_exemption '" + exemption + "'");
    }
    if (doc.contains("localizer")) {
      const auto& l = doc["localizer"];
      reject_unknown(l,
                     {"rho", "zeta", "motion_noise", "step_tolerance", "max_iterations", "initial_damping",
                      "damping_factor"},
                     "localizer");
      if (l.contains("rho")) {
        const auto rho = l["rho"].get<std::vector<double>>();
        if (rho.size() != 3) throw Error(ErrorKind::ConfigError, "localizer.rho needs three values");
        std::copy(rho.begin(), rho.end(), cfg.weights.rho.begin());
      }
      cfg.weights.zeta = l.value("zeta", cfg.weights.zeta);
      cfg.weights.motion_noise = l.value("motion_noise", cfg.weights.motion_noise);
      cfg.solver.step_tolerance = l.value("step_tolerance", cfg.solver.step_tolerance);
      cfg.solver.max_iterations = l.value("max_iterations", cfg.solver.max_iterations);
      cfg.solver.initial_damping = l.value("initial_damping", cfg.solver.initial_damping);
      cfg.solver.damping_factor = l.value("damping_factor", cfg.solver.damping_factor);
    }
    if (doc.contains("mode")) cfg.mode = parse_estimator_mode(doc["mode"].get<std::string>());
    if (doc.contains("metrics")) {
      const auto& m = doc["metrics"];
      reject_unknown(m, {"policy"}, "metrics");
      const auto policy = m.value("policy", std::string("explored-only"));
      if (policy == "explored-only") cfg.policy = CellPolicy::ExploredOnly;
      else if (policy == "all-cells") cfg.policy = CellPolicy::AllCells;
      else throw Error(ErrorKind::ConfigError, "unknown metrics policy '" + policy + "'");
    }
    if (doc.contains("agents")) cfg.agent_count = doc["agents"].get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

long peak_rss_kb() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream in(line.substr(6));
      long kb = 0;
      in >> kb;
      return kb;
    }
  }
  return 0;
}

ChannelStats stream_stats(const std::vector<SyntheticFrame>& frames) {
  std::vector<UwbFrame> all;
  for (const auto& f : frames) {
    for (const auto& m : f.measurements) all.push_back(m.frame);
  }
  try {
    return compute_stats(all);
  } catch (const Error&) {
    return ChannelStats(Channels::Zero(), Channels::Ones());
  }
}

struct AgentRuntime {
  SensorPipeline pipeline;
  std::optional<AgentState> state;
  double last_timestamp = 0.0;
};

struct Pending {
  int anchor_id;
  double distance;
  Channels smoothed;
  bool presented_los;
};

double rms_cm(double sum_sq, std::size_t n) { return n ? 100.0 * std::sqrt(sum_sq / static_cast<double>(n)) : 0.0; }

}  // namespace

GridGeometry grid_for(const Scenario& scenario, double resolution) {
  const Point2 extent = scenario.bounds.max - scenario.bounds.min;
  const int cols = static_cast<int>(std::ceil(extent.x() / resolution - 1e-9));
  const int rows = static_cast<int>(std::ceil(extent.y() / resolution - 1e-9));
  return GridGeometry(scenario.bounds.min, resolution, rows, cols);
}

StageTiming RunReport::stage(double FrameTiming::*field) const {
  StageTiming out;
  if (timing.empty()) return out;
  std::vector<double> v;
  v.reserve(timing.size());
  for (const auto& t : timing) v.push_back(t.*field);
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean_ms = sum / static_cast<double>(v.size());
  out.p95_ms = v[static_cast<std::size_t>(0.95 * static_cast<double>(v.size() - 1))];
  out.max_ms = v.back();
  return out;
}

StageTiming RunReport::total_timing() const {
  StageTiming out;
  if (timing.empty()) return out;
  std::vector<double> v;
  for (const auto& t : timing) v.push_back(t.total());
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean_ms = sum / static_cast<double>(v.size());
  out.p95_ms = v[static_cast<std::size_t>(0.95 * static_cast<double>(v.size() - 1))];
  out.max_ms = v.back();
  return out;
}

RunReport run_frames(const PipelineConfig& config, const Scenario& scenario,
                     const std::vector<SyntheticFrame>& frames) {
  config.validate();
  scenario.validate();
  const std::size_t n_agents = scenario.agents.size();
  if (config.agent_count && static_cast<std::size_t>(*config.agent_count) != n_agents) {
    throw Error(ErrorKind::ConfigError, "config expects " + std::to_string(*config.agent_count) +
                                            " agents, scenario has " + std::to_string(n_agents));
  }

  const GridGeometry geometry = grid_for(scenario, config.resolution);
  RunReport report(OccupancyGrid{geometry});
  report.trajectories.resize(n_agents);
  report.truth = rasterize_truth(geometry, scenario.obstacles);
  report.map = TriStateMap::Zero(geometry.rows(), geometry.cols());

  const bool use_classifier = scenario.mode == LabelMode::Classifier;
  std::optional<SvmModel> model;
  std::optional<ChannelStats> stats;
  if (use_classifier) {
    if (config.svm_model.empty() || config.channel_stats.empty()) {
      throw Error(ErrorKind::ConfigError, "classifier mode needs classifier.model and classifier.stats");
    }
    model = load_model(config.svm_model);
    stats = load_stats(config.channel_stats);
  } else {
    stats = stream_stats(frames);
  }

  std::vector<AgentRuntime> agents;
  for (std::size_t a = 0; a < n_agents; ++a) agents.push_back({SensorPipeline(*stats, config.sensor), {}, 0.0});

  SharedGrid grid(geometry);
  TriStateMap snapshot = TriStateMap::Zero(geometry.rows(), geometry.cols());
  const double nominal_dt = 1.0 / scenario.rate;
  const double lambda = config.weights.lambda;
  const std::size_t refresh_every = static_cast<std::size_t>(config.filter_every) * n_agents;

  std::vector<bool> presented_labels;
  std::vector<bool> true_labels;
  std::vector<Pending> pending;
  std::vector<RangeObservation> observations;
  std::vector<bool> los_flags;

  for (const auto& frame : frames) {
    if (frame.agent < 0 || static_cast<std::size_t>(frame.agent) >= n_agents) {
      throw Error(ErrorKind::InputError, "frame refers to unknown agent " + std::to_string(frame.agent));
    }
    AgentRuntime& rt = agents[static_cast<std::size_t>(frame.agent)];
    FrameTiming timing;

    // Preprocess: normalize, 3-sigma gate, smooth.
    auto t0 = Clock::now();
    pending.clear();
    for (const auto& m : frame.measurements) {
      if (!scenario.anchors.contains(m.frame.anchor_id)) {
        throw Error(ErrorKind::InputError, "frame refers to unknown anchor " + std::to_string(m.frame.anchor_id));
      }
      const ProcessedFrame pf = rt.pipeline.process(m.frame);
      if (pf.status == FrameStatus::Ready) pending.push_back({pf.anchor_id, pf.distance, pf.smoothed, m.presented_los});
      presented_labels.push_back(m.presented_los);
      true_labels.push_back(m.true_los);
    }
    auto t1 = Clock::now();

    // LOS decision and beta.
    observations.clear();
    los_flags.clear();
    for (const auto& p : pending) {
      LosDecision decision;
      if (model) {
        decision = classify(*model, make_feature(p.smoothed));
      } else {
        decision.label = p.presented_los ? kLos : kNlos;
        decision.score = decision.label * config.oracle_confidence / lambda;
      }
      decision.beta = score_to_weight(decision.score, lambda);
      observations.push_back({p.anchor_id, p.distance, decision.beta, 1.0});
      los_flags.push_back(decision.label == kLos);
    }
    auto t2 = Clock::now();

    // Solve against the snapshot built from earlier frames only.
    std::optional<Estimate> estimate;
    if (!rt.state) {
      if (observations.size() >= 3) {
        ObjectiveWeights boot = config.weights;
        boot.rho[1] = 0.0;
        boot.rho[2] = 0.0;
        if (boot.rho[0] == 0.0) boot.rho[0] = 1.0;
        const AgentState seed{scenario.anchors.centroid(), Eigen::Vector2d::Zero(), frame.timestamp - nominal_dt};
        try {
          estimate = solve(observations, seed, nominal_dt, scenario.anchors, boot, config.solver);
          estimate->state.u.setZero();
        } catch (const Error&) {
          ++report.solver_failures;
        }
      }
    } else {
      double dt = frame.timestamp - rt.last_timestamp;
      if (!(dt > 0.0)) dt = nominal_dt;
      const AgentState predicted = predict(*rt.state, dt);
      if (config.mode == EstimatorMode::RangeSlam) {
        const Point2 p_ray = geometry.clamp(predicted.p);
        for (auto& obs : observations) {
          obs.alpha = map_weight(geometry, snapshot, p_ray, scenario.anchors.position(obs.anchor_id),
                                 config.weights.zeta);
        }
      }
      try {
        estimate = config.mode == EstimatorMode::RangeSlam
                       ? solve(observations, *rt.state, dt, scenario.anchors, config.weights, config.solver)
                       : wls_baseline(observations, *rt.state, dt, scenario.anchors, config.weights, config.solver);
        if (!estimate->state.p.allFinite() || !estimate->state.u.allFinite()) {
          throw Error(ErrorKind::Underdetermined, "non-finite state");
        }
      } catch (const Error&) {
        ++report.solver_failures;
        estimate = Estimate{predicted, false, 0, 0.0, 0.0};
      }
    }
    auto t3 = Clock::now();

    // Map update from this frame's estimate, then periodic binarize + filter.
    if (estimate) {
      rt.state = estimate->state;
      rt.state->timestamp = frame.timestamp;
      rt.last_timestamp = frame.timestamp;
      const Point2 p_ray = geometry.clamp(rt.state->p);
      for (std::size_t k = 0; k < observations.size(); ++k) {
        const RayTrace ray = raycast(geometry, p_ray, scenario.anchors.position(observations[k].anchor_id));
        if (config.exemption == NlosExemption::FilteredMap) grid.update(ray, los_flags[k], config.hits, snapshot);
        else grid.update(ray, los_flags[k], config.hits);
      }
      const auto& path = scenario.agents[static_cast<std::size_t>(frame.agent)];
      report.trajectories[static_cast<std::size_t>(frame.agent)].push_back(
          {frame.timestamp, rt.state->p, rt.state->u, estimate->converged, frame.true_pose,
           path.lap_at(frame.timestamp)});
    }
    ++report.frames_processed;
    if (report.frames_processed % refresh_every == 0) snapshot = filter_binary(binarize(grid.snapshot()), config.filter);
    auto t4 = Clock::now();

    timing.preprocess_ms = ms_between(t0, t1);
    timing.classify_ms = ms_between(t1, t2);
    timing.solve_ms = ms_between(t2, t3);
    timing.map_ms = ms_between(t3, t4);
    report.timing.push_back(timing);
  }

  report.grid = grid.snapshot();
  report.map = filter_binary(binarize(report.grid), config.filter);
  report.score = map_metrics(report.map, report.truth, config.policy);
  if (!true_labels.empty()) report.ident_accuracy = identification_report(presented_labels, true_labels);

  double sum_sq = 0.0;
  std::size_t n = 0;
  std::map<int, std::pair<double, std::size_t>> per_lap;
  for (const auto& traj : report.trajectories) {
    for (const auto& row : traj) {
      const double e2 = (row.p - row.truth).squaredNorm();
      sum_sq += e2;
      ++n;
      auto& lap = per_lap[row.lap];
      lap.first += e2;
      ++lap.second;
    }
  }
  if (n > 0) report.ate_rmse_cm = rms_cm(sum_sq, n);
  for (const auto& [lap, acc] : per_lap) report.laps.push_back({lap, acc.second, rms_cm(acc.first, acc.second)});
  report.peak_memory_kb = peak_rss_kb();
  return report;
}

RunReport run_slam(const PipelineConfig& config, const Scenario& scenario) {
  return run_frames(config, scenario, run(scenario));
}

RunReport replay(const std::filesystem::path& recording, const PipelineConfig& config, const Scenario& scenario) {
  const auto records = read_frame_csv(recording);
  for (const auto& r : records) {
    if (!r.has_truth) {
      throw Error(ErrorKind::SchemaError, recording.string() + ": replay needs the agent and truth columns");
    }
  }
  return run_frames(config, scenario, from_records(records));
}

// ---------------------------------------------------------------------------

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InputError, "cannot write " + path.string());
  out << "timestamp,x,y,vx,vy,converged\n";
  for (const auto& r : rows) {
    out << csv::format_double(r.timestamp) << ',' << csv::format_double(r.p.x()) << ','
        << csv::format_double(r.p.y()) << ',' << csv::format_double(r.u.x()) << ','
        << csv::format_double(r.u.y()) << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

std::vector<TimedPoint> read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InputError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::SchemaError, path.string() + ":1: missing header");
  const auto header = csv::split(csv::trim(line));
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::SchemaError, path.string() + ":1: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ct = column("timestamp");
  const std::size_t cx = column("x");
  const std::size_t cy = column("y");
  std::vector<TimedPoint> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = csv::trim(line);
    if (line.empty()) continue;
    const auto cells = csv::split(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line_no) + ": wrong field count");
    }
    try {
      out.push_back({csv::parse_double(cells[ct]), Point2(csv::parse_double(cells[cx]), csv::parse_double(cells[cy]))});
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

nlohmann::json timing_json(const StageTiming& t) {
  return {{"mean_ms", t.mean_ms}, {"p95_ms", t.p95_ms}, {"max_ms", t.max_ms}};
}

void write_truth_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InputError, "cannot write " + path.string());
  out << "timestamp,x,y\n";
  for (const auto& r : rows) {
    out << csv::format_double(r.timestamp) << ',' << csv::format_double(r.truth.x()) << ','
        << csv::format_double(r.truth.y()) << '\n';
  }
}

Eigen::MatrixXd as_values(const TriStateMap& map) { return map.cast<double>(); }

}  // namespace

void write_outputs(RunReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto emit = [&](const std::string& name) {
    report.outputs.push_back(out_dir / name);
    return out_dir / name;
  };
  for (std::size_t a = 0; a < report.trajectories.size(); ++a) {
    const std::string suffix = a == 0 ? "" : "_" + std::to_string(a);
    write_trajectory_csv(report.trajectories[a], emit("trajectory" + suffix + ".csv"));
    write_truth_csv(report.trajectories[a], emit("truth" + suffix + ".csv"));
  }
  write_pgm(report.map, emit("map.pgm"));
  write_grid_csv(report.grid.evidence(), emit("map_evidence.csv"));
  write_grid_csv(as_values(report.map), emit("map_filtered.csv"));
  write_grid_csv(as_values(report.truth), emit("truth_map.csv"));

  nlohmann::json metrics;
  const auto& c = report.score.counts;
  metrics["tp"] = c.tp;
  metrics["tn"] = c.tn;
  metrics["fp"] = c.fp;
  metrics["fn"] = c.fn;
  metrics["accuracy"] = report.score.accuracy;
  metrics["recall"] = report.score.recall;
  metrics["precision"] = report.score.precision;
  metrics["f1"] = report.score.f1;
  metrics["ate_rmse_cm"] = report.ate_rmse_cm ? nlohmann::json(*report.ate_rmse_cm) : nlohmann::json(nullptr);
  metrics["ident_accuracy"] =
      report.ident_accuracy ? nlohmann::json(*report.ident_accuracy) : nlohmann::json(nullptr);
  metrics["frames"] = report.frames_processed;
  metrics["solver_failures"] = report.solver_failures;
  metrics["laps"] = nlohmann::json::array();
  for (const auto& lap : report.laps) {
    metrics["laps"].push_back({{"lap", lap.lap + 1}, {"frames", lap.frames}, {"ate_rmse_cm", lap.ate_rmse_cm}});
  }
  {
    std::ofstream out(emit("metrics.json"));
    out << metrics.dump(2) << '\n';
  }

  nlohmann::json timing;
  timing["frames"] = report.timing.size();
  timing["preprocess"] = timing_json(report.stage(&FrameTiming::preprocess_ms));
  timing["classify"] = timing_json(report.stage(&FrameTiming::classify_ms));
  timing["solve"] = timing_json(report.stage(&FrameTiming::solve_ms));
  timing["map_update"] = timing_json(report.stage(&FrameTiming::map_ms));
  timing["total"] = timing_json(report.total_timing());
  timing["peak_memory_kb"] = report.peak_memory_kb;
  {
    std::ofstream out(emit("timing.json"));
    out << timing.dump(2) << '\n';
  }
}

// ---------------------------------------------------------------------------

CompareReport run_compare(const PipelineConfig& config, const Scenario& scenario, std::vector<double> ident_rates) {
  if (ident_rates.empty()) throw Error(ErrorKind::ConfigError, "compare needs at least one identification rate");
  CompareReport report;
  std::vector<double> unique;
  for (double r : ident_rates) {
    if (std::find(unique.begin(), unique.end(), r) != unique.end()) {
      std::ostringstream msg;
      msg << "duplicate identification rate " << r << " ignored";
      report.warnings.push_back(msg.str());
      continue;
    }
    unique.push_back(r);
  }
  for (const auto& ag : scenario.agents) report.lap_count = std::max(report.lap_count, ag.laps);

  for (double rate : unique) {
    Scenario s = scenario;
    s.ident_rate = rate;
    const auto frames = run(s);
    for (const auto mode : {EstimatorMode::RangeSlam, EstimatorMode::WlsBaseline}) {
      PipelineConfig cfg = config;
      cfg.mode = mode;
      const RunReport r = run_frames(cfg, s, frames);
      report.rows.push_back({rate, mode, r.score, r.ate_rmse_cm.value_or(0.0), r.laps});
    }
  }
  return report;
}

std::string format_compare_table(const CompareReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "rate   mode          accuracy recall   f1       ate_cm";
  for (int lap = 0; lap < report.lap_count; ++lap) out << "   lap" << lap + 1 << "_cm";
  out << '\n';
  for (const auto& row : report.rows) {
    out << std::setw(6) << std::left << row.ident_rate << ' ' << std::setw(13) << to_string(row.mode) << ' '
        << std::right << std::setw(8) << row.score.accuracy << ' ' << std::setw(8) << row.score.recall << ' '
        << std::setw(8) << row.score.f1 << ' ' << std::setw(8) << row.ate_rmse_cm;
    for (int lap = 0; lap < report.lap_count; ++lap) {
      const auto it = std::find_if(row.laps.begin(), row.laps.end(), [lap](const LapError& l) { return l.lap == lap; });
      out << ' ' << std::setw(10) << (it != row.laps.end() ? it->ate_rmse_cm : 0.0);
    }
    out << '\n';
  }
  return out.str();
}

void write_compare_json(const CompareReport& report, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["warnings"] = report.warnings;
  doc["runs"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json j;
    j["ident_rate"] = row.ident_rate;
    j["mode"] = to_string(row.mode);
    j["tp"] = row.score.counts.tp;
    j["tn"] = row.score.counts.tn;
    j["fp"] = row.score.counts.fp;
    j["fn"] = row.score.counts.fn;
    j["accuracy"] = row.score.accuracy;
    j["recall"] = row.score.recall;
    j["f1"] = row.score.f1;
    j["ate_rmse_cm"] = row.ate_rmse_cm;
    j["laps"] = nlohmann::json::array();
    for (const auto& lap : row.laps) j["laps"].push_back({{"lap", lap.lap + 1}, {"ate_rmse_cm", lap.ate_rmse_cm}});
    doc["runs"].push_back(j);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InputError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace rangeslam
