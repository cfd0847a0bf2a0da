#pragma once

// Deterministic synthetic UWB streams: agents following waypoint loops among
// rectangular obstacles, with LOS ground truth, range/RSSI noise and a knob
// that degrades the LOS labels presented downstream.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rangeslam/grid_mapper.hpp"
#include "rangeslam/localizer.hpp"
#include "rangeslam/sensor_pipeline.hpp"

namespace rangeslam {

using Rng = std::mt19937_64;

/// Axis-aligned rectangle [min.x, max.x] x [min.y, max.y].
struct Rect {
  Point2 min = Point2::Zero();
  Point2 max = Point2::Zero();

  bool contains(const Point2& p) const {
    return p.x() >= min.x() && p.y() >= min.y() && p.x() <= max.x() && p.y() <= max.y();
  }
  bool interior_contains(const Point2& p) const {
    return p.x() > min.x() && p.y() > min.y() && p.x() < max.x() && p.y() < max.y();
  }
};

struct NoiseParams {
  double sigma_los = 0.05;       // m
  double nlos_bias_mean = 0.5;   // m, exponential
  double sigma_nlos = 0.15;      // m
  double p0 = -40.0;             // dBm at 1 m
  double pathloss_exponent = 2.0;
  double nlos_atten = 10.0;      // dB on Rx, doubled on Fp
  double sigma_rssi = 1.0;       // dB
};

enum class LabelMode { OracleDegraded, Classifier };

struct AgentPath {
  std::vector<Point2> waypoints;
  double speed = 1.0;  // m/s
  int laps = 1;        // closed loops when there are at least two waypoints

  /// Length of one pass around the closed waypoint loop.
  double loop_length() const;
  Point2 position_at(double t) const;
  /// Zero-based lap index at time t (0 for stationary agents).
  int lap_at(double t) const;
};

struct Scenario {
  Rect bounds{Point2(0, 0), Point2(20, 20)};
  AnchorConfig anchors;
  std::vector<Rect> obstacles;
  std::vector<AgentPath> agents;
  double rate = 50.0;      // Hz
  double duration = 0.0;   // s; 0 derives it from the longest agent path
  std::uint64_t seed = 0;
  NoiseParams noise;
  double ident_rate = 1.0;
  LabelMode mode = LabelMode::OracleDegraded;

  /// Throws InvalidScenario with a diagnostic.
  void validate() const;
  double effective_duration() const;
  std::size_t tick_count() const;
};

/// 20x20 m area, four corner anchors, central 10x10 m obstacle and a
/// 15x15 m square loop driven at 2.5 m/s and sampled at 50 Hz.
Scenario benchmark_scenario(double ident_rate, std::uint64_t seed, int laps = 2);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

struct AnchorMeasurement {
  UwbFrame frame;
  bool true_los = true;
  bool presented_los = true;
};

struct SyntheticFrame {
  int agent = 0;
  double timestamp = 0.0;
  Point2 true_pose = Point2::Zero();
  std::vector<AnchorMeasurement> measurements;
};

/// True iff the open segment misses every obstacle interior. Grazing an edge
/// or a corner counts as line of sight.
bool los_ground_truth(const Point2& p, const Point2& anchor, std::span<const Rect> obstacles);

double synthesize_range(double d_true, bool los, const NoiseParams& noise, Rng& rng);

struct Rssi {
  double rx = 0.0;
  double fp = 0.0;
};
/// Log-distance path loss with per-reading noise. Throws NonPositiveDistance.
Rssi synthesize_rssi(double d, bool los, const NoiseParams& noise, Rng& rng);

/// Each label flips independently with probability 1 - ident_rate.
std::vector<bool> degrade_labels(const std::vector<bool>& true_los, double ident_rate, Rng& rng);

/// Frames ordered by tick, then agent. Reproducible from the scenario seed.
std::vector<SyntheticFrame> run(const Scenario& scenario);

std::vector<FrameRecord> to_records(std::span<const SyntheticFrame> frames);
/// Regroups records into frames (consecutive rows sharing timestamp and agent).
std::vector<SyntheticFrame> from_records(std::span<const FrameRecord> records);

}  // namespace rangeslam
