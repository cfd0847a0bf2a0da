#pragma once

// End-to-end frame loop: preprocess -> LOS decision -> solve -> map update,
// with periodic binarize + filter, plus the run-level outputs (trajectory,
// maps, metrics, timing) and the identification-rate sweep.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rangeslam/grid_mapper.hpp"
#include "rangeslam/localizer.hpp"
#include "rangeslam/metrics.hpp"
#include "rangeslam/nlos_classifier.hpp"
#include "rangeslam/sensor_pipeline.hpp"
#include "rangeslam/simulator.hpp"

namespace rangeslam {

enum class EstimatorMode { RangeSlam, WlsBaseline };

const char* to_string(EstimatorMode mode);
EstimatorMode parse_estimator_mode(const std::string& text);

/// Which map decides that a cell is free and therefore skipped by NLOS rays.
enum class NlosExemption {
  FilteredMap,   // last binarized + filtered snapshot
  LiveEvidence,  // sign of the current evidence
};

struct PipelineConfig {
  PipelineParams sensor;
  std::filesystem::path svm_model;      // classifier mode only
  std::filesystem::path channel_stats;  // classifier mode only
  /// |lambda * score| of the synthetic decision in oracle-degraded mode.
  double oracle_confidence = 3.0;
  double resolution = 0.2;
  HitParams hits;
  FilterParams filter;
  int filter_every = 25;
  NlosExemption exemption = NlosExemption::FilteredMap;
  ObjectiveWeights weights;
  SolverOptions solver;
  EstimatorMode mode = EstimatorMode::RangeSlam;
  CellPolicy policy = CellPolicy::ExploredOnly;
  std::optional<int> agent_count;

  /// Throws ConfigError.
  void validate() const;
};

/// Unknown keys are rejected. Relative paths resolve against the file's folder.
PipelineConfig load_config(const std::filesystem::path& path);

struct TrajectoryRow {
  double timestamp = 0.0;
  Point2 p = Point2::Zero();
  Eigen::Vector2d u = Eigen::Vector2d::Zero();
  bool converged = true;
  Point2 truth = Point2::Zero();
  int lap = 0;
};

struct StageTiming {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
};

struct FrameTiming {
  double preprocess_ms = 0.0;
  double classify_ms = 0.0;
  double solve_ms = 0.0;
  double map_ms = 0.0;
  double total() const { return preprocess_ms + classify_ms + solve_ms + map_ms; }
};

struct LapError {
  int lap = 0;
  std::size_t frames = 0;
  double ate_rmse_cm = 0.0;
};

struct RunReport {
  explicit RunReport(OccupancyGrid g) : grid(std::move(g)) {}

  std::vector<std::vector<TrajectoryRow>> trajectories;  // one per agent
  OccupancyGrid grid;
  TriStateMap map;    // final binarized + filtered
  TriStateMap truth;  // rasterized from the scenario obstacles
  MapScore score;
  std::optional<double> ate_rmse_cm;
  std::vector<LapError> laps;
  std::optional<double> ident_accuracy;
  std::vector<FrameTiming> timing;
  std::size_t frames_processed = 0;
  std::size_t solver_failures = 0;
  long peak_memory_kb = 0;
  std::vector<std::filesystem::path> outputs;

  StageTiming stage(double FrameTiming::*field) const;
  StageTiming total_timing() const;
};

GridGeometry grid_for(const Scenario& scenario, double resolution);

/// Runs the frame loop over an already materialized stream. The scenario
/// supplies the world (bounds, anchors, obstacles, agent paths, label mode).
RunReport run_frames(const PipelineConfig& config, const Scenario& scenario,
                     const std::vector<SyntheticFrame>& frames);

/// Simulates the scenario, then runs the frame loop.
RunReport run_slam(const PipelineConfig& config, const Scenario& scenario);

/// Re-runs a recorded frame CSV against the scenario's world.
RunReport replay(const std::filesystem::path& recording, const PipelineConfig& config, const Scenario& scenario);

/// trajectory.csv (+ trajectory_<k>.csv for extra agents), truth.csv, map.pgm,
/// map_evidence.csv, map_filtered.csv, truth_map.csv, metrics.json, timing.json.
void write_outputs(RunReport& report, const std::filesystem::path& out_dir);

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path);
std::vector<TimedPoint> read_trajectory_csv(const std::filesystem::path& path);

struct CompareRow {
  double ident_rate = 0.0;
  EstimatorMode mode = EstimatorMode::RangeSlam;
  MapScore score;
  double ate_rmse_cm = 0.0;
  std::vector<LapError> laps;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  std::vector<std::string> warnings;
  int lap_count = 0;
};

/// Both estimator modes for every (deduplicated) rate on identical seeds.
CompareReport run_compare(const PipelineConfig& config, const Scenario& scenario, std::vector<double> ident_rates);

std::string format_compare_table(const CompareReport& report);
void write_compare_json(const CompareReport& report, const std::filesystem::path& path);

}  // namespace rangeslam
