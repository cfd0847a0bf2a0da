// rangeslam: simulate, train-svm, slam, compare, evaluate.
//
// Exit codes: 0 success, 1 input/config error, 2 runtime failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rangeslam/error.hpp"
#include "rangeslam/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rangeslam;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitRuntime = 2;

bool is_input_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InputError:
    case ErrorKind::SchemaError:
    case ErrorKind::InvalidScenario:
      return true;
    default:
      return false;
  }
}

void make_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

struct WorldArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<double> ident_rate;
  std::optional<int> laps;

  void add(CLI::App* app) {
    app->add_option("--scenario", scenario, "Scenario JSON (default: built-in 20x20 m benchmark)");
    app->add_option("--seed", seed, "Override the scenario seed");
    app->add_option("--ident-rate", ident_rate, "Override the identification rate")->check(CLI::Range(0.0, 1.0));
    app->add_option("--laps", laps, "Laps for the built-in benchmark")->check(CLI::PositiveNumber);
  }

  Scenario load() const {
    Scenario s = scenario.empty() ? benchmark_scenario(ident_rate.value_or(0.99), seed.value_or(0), laps.value_or(2))
                                  : load_scenario(scenario);
    if (seed) s.seed = *seed;
    if (ident_rate) s.ident_rate = *ident_rate;
    s.validate();
    return s;
  }
};

PipelineConfig load_pipeline_config(const std::string& path, const std::string& mode) {
  PipelineConfig cfg = path.empty() ? PipelineConfig{} : load_config(path);
  if (!mode.empty()) cfg.mode = parse_estimator_mode(mode);
  return cfg;
}

void print_summary(const RunReport& r) {
  std::cout << "frames: " << r.frames_processed << '\n';
  std::cout << "map: accuracy " << r.score.accuracy << ", recall " << r.score.recall << ", f1 " << r.score.f1 << '\n';
  if (r.ate_rmse_cm) std::cout << "ate_rmse_cm: " << *r.ate_rmse_cm << '\n';
  for (const auto& lap : r.laps) std::cout << "  lap " << lap.lap + 1 << ": " << lap.ate_rmse_cm << " cm\n";
  const auto t = r.total_timing();
  std::cout << "per-frame ms: mean " << t.mean_ms << ", p95 " << t.p95_ms << ", max " << t.max_ms << '\n';
  if (r.solver_failures) std::cerr << "warning: " << r.solver_failures << " solver failures fell back to prediction\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Range-only SLAM with UWB NLOS identification"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Scenario -> frame CSV");
  WorldArgs sim_world;
  sim_world.add(sim);
  std::string sim_out;
  sim->add_option("--out", sim_out, "Frame CSV to write")->required();

  // train-svm
  auto* tr = app.add_subcommand("train-svm", "Train the LOS/NLOS classifier from a labeled frame CSV");
  std::string tr_data, tr_out, tr_kernel = "gaussian";
  double tr_c = 1.0, tr_gamma = 0.5;
  std::size_t tr_max = 4000;
  tr->add_option("--data", tr_data, "Labeled frame CSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--kernel", tr_kernel, "linear or gaussian")->check(CLI::IsMember({"linear", "gaussian"}));
  tr->add_option("--out", tr_out, "Model JSON; stats go to <out>.stats.json")->required();
  tr->add_option("--c", tr_c, "Regularization constant")->check(CLI::PositiveNumber);
  tr->add_option("--gamma", tr_gamma, "Gaussian kernel width")->check(CLI::PositiveNumber);
  tr->add_option("--max-samples", tr_max, "Evenly subsample to at most this many")->check(CLI::PositiveNumber);

  // slam
  auto* sl = app.add_subcommand("slam", "Run the full loop on a scenario or a recorded frame CSV");
  WorldArgs sl_world;
  sl_world.add(sl);
  std::string sl_config, sl_mode, sl_frames, sl_out = "out";
  sl->add_option("--config", sl_config, "Pipeline config JSON")->check(CLI::ExistingFile);
  sl->add_option("--mode", sl_mode, "range-slam or wls-baseline")->check(CLI::IsMember({"range-slam", "wls-baseline"}));
  sl->add_option("--frames", sl_frames, "Replay this frame CSV instead of simulating")->check(CLI::ExistingFile);
  sl->add_option("--out-dir", sl_out, "Output directory");

  // compare
  auto* cmp = app.add_subcommand("compare", "Both estimators across identification rates");
  WorldArgs cmp_world;
  cmp_world.add(cmp);
  std::string cmp_config, cmp_out = "compare";
  std::vector<double> cmp_rates{0.99, 0.8, 0.7, 0.6};
  cmp->add_option("--config", cmp_config, "Pipeline config JSON")->check(CLI::ExistingFile);
  cmp->add_option("--rates", cmp_rates, "Identification rates")->check(CLI::Range(0.0, 1.0));
  cmp->add_option("--out-dir", cmp_out, "Output directory");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a run directory against ground truth");
  std::string ev_dir, ev_truth_map, ev_truth_traj, ev_out, ev_policy = "explored-only";
  double ev_max_dt = 0.01;
  ev->add_option("--out-dir", ev_dir, "Run directory written by slam")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--truth-map", ev_truth_map, "Truth grid CSV (default: <out-dir>/truth_map.csv)");
  ev->add_option("--truth", ev_truth_traj, "Truth trajectory CSV (default: <out-dir>/truth.csv)");
  ev->add_option("--policy", ev_policy, "explored-only or all-cells")->check(CLI::IsMember({"explored-only", "all-cells"}));
  ev->add_option("--max-dt", ev_max_dt, "Pairing window in seconds")->check(CLI::PositiveNumber);
  ev->add_option("--out", ev_out, "Metrics JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*sim) {
      const Scenario s = sim_world.load();
      const auto frames = run(s);
      make_parent(sim_out);
      write_frame_csv(to_records(frames), sim_out);
      std::cout << "wrote " << frames.size() << " frames to " << sim_out << '\n';
    } else if (*tr) {
      const auto records = read_frame_csv(tr_data);
      std::vector<UwbFrame> raw;
      raw.reserve(records.size());
      for (const auto& r : records) raw.push_back(r.frame);
      const ChannelStats stats = compute_stats(raw);
      auto samples = build_training_set(records, stats);
      if (samples.size() > tr_max) {
        std::vector<LabeledSample> picked;
        for (std::size_t i = 0; i < tr_max; ++i) picked.push_back(samples[i * samples.size() / tr_max]);
        samples = std::move(picked);
      }
      TrainParams params;
      params.kernel = tr_kernel == "linear" ? Kernel::linear() : Kernel::gaussian(tr_gamma);
      params.c_reg = tr_c;
      const SvmModel model = train(samples, params);
      if (!model.converged()) std::cerr << "warning: training hit the iteration cap\n";
      make_parent(tr_out);
      save_model(model, tr_out);
      save_stats(stats, tr_out + ".stats.json");
      const Evaluation e = evaluate(model, samples);
      std::cout << "trained on " << samples.size() << " samples, training accuracy " << e.accuracy << '\n';
    } else if (*sl) {
      const PipelineConfig cfg = load_pipeline_config(sl_config, sl_mode);
      const Scenario s = sl_world.load();
      RunReport report = sl_frames.empty() ? run_slam(cfg, s) : replay(sl_frames, cfg, s);
      write_outputs(report, sl_out);
      print_summary(report);
    } else if (*cmp) {
      const PipelineConfig cfg = load_pipeline_config(cmp_config, "");
      const Scenario s = cmp_world.load();
      const CompareReport report = run_compare(cfg, s, cmp_rates);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
      fs::create_directories(cmp_out);
      write_compare_json(report, fs::path(cmp_out) / "compare.json");
      std::cout << format_compare_table(report);
    } else if (*ev) {
      const fs::path dir(ev_dir);
      const auto estimate = to_tri_state(read_grid_csv(dir / "map_filtered.csv"));
      const auto truth = to_tri_state(read_grid_csv(ev_truth_map.empty() ? dir / "truth_map.csv" : fs::path(ev_truth_map)));
      const MapScore score =
          map_metrics(estimate, truth, ev_policy == "all-cells" ? CellPolicy::AllCells : CellPolicy::ExploredOnly);
      nlohmann::json doc{{"tp", score.counts.tp},   {"tn", score.counts.tn}, {"fp", score.counts.fp},
                         {"fn", score.counts.fn},   {"accuracy", score.accuracy}, {"recall", score.recall},
                         {"precision", score.precision}, {"f1", score.f1}};
      const auto est_traj = read_trajectory_csv(dir / "trajectory.csv");
      const auto truth_traj = read_trajectory_csv(ev_truth_traj.empty() ? dir / "truth.csv" : fs::path(ev_truth_traj));
      if (est_traj.empty()) {
        doc["ate_rmse_cm"] = nullptr;
      } else {
        doc["ate_rmse_cm"] = ate_rmse(est_traj, truth_traj, ev_max_dt);
      }
      if (ev_out.empty()) {
        std::cout << doc.dump(2) << '\n';
      } else {
        make_parent(ev_out);
        std::ofstream out(ev_out);
        if (!out) throw Error(ErrorKind::InputError, "cannot write " + ev_out);
        out << doc.dump(2) << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_input_error(e.kind()) ? kExitInput : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
