#pragma once

// Map confusion scores against a rasterized ground truth, trajectory ATE and
// LOS identification accuracy.

#include <cstddef>
#include <span>
#include <vector>

#include "rangeslam/grid_mapper.hpp"
#include "rangeslam/simulator.hpp"

namespace rangeslam {

/// Positive class: occupied.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
};

struct MapScore {
  ConfusionCounts counts;
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

MapScore score_counts(const ConfusionCounts& counts);

enum class CellPolicy {
  ExploredOnly,  // unexplored estimate cells are skipped
  AllCells,      // unexplored estimate cells count as free
};

/// Throws GeometryMismatch on differing sizes and InvalidArgument when the
/// truth contains unexplored cells.
MapScore map_metrics(const TriStateMap& estimated, const TriStateMap& truth,
                     CellPolicy policy = CellPolicy::ExploredOnly);

/// A cell is occupied iff its center lies inside an obstacle.
TriStateMap rasterize_truth(const GridGeometry& geometry, std::span<const Rect> obstacles);

struct TimedPoint {
  double timestamp = 0.0;
  Point2 p = Point2::Zero();
};

/// RMS position error in centimeters over nearest-timestamp pairs closer than
/// max_dt. Both trajectories must be sorted by time. Throws NoOverlap.
double ate_rmse(std::span<const TimedPoint> estimated, std::span<const TimedPoint> truth, double max_dt);

/// Fraction of positions where the two label streams agree. Throws LengthMismatch.
double identification_report(const std::vector<bool>& presented, const std::vector<bool>& truth);

}  // namespace rangeslam
