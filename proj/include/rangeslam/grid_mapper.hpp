#pragma once

// Occupancy evidence grid built from UWB line-of-sight observations:
// Bresenham raycasting, free/occupied hit updates, sign binarization and
// binary post-filtering.

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <vector>

#include <Eigen/Core>

namespace rangeslam {

using Point2 = Eigen::Vector2d;

/// Cell index: ix along world x (columns), iy along world y (rows).
struct Cell {
  int ix = 0;
  int iy = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

class GridGeometry {
 public:
  GridGeometry(Point2 origin, double resolution, int rows, int cols);

  const Point2& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

  bool contains(const Point2& p) const;
  bool contains(const Cell& c) const { return c.ix >= 0 && c.iy >= 0 && c.ix < cols_ && c.iy < rows_; }

  /// Throws OutOfBounds for points outside the grid.
  Cell to_cell(const Point2& p) const;
  Point2 cell_center(const Cell& c) const;
  /// Nearest point inside the grid (useful for estimates drifting past the border).
  Point2 clamp(const Point2& p) const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;

 private:
  Point2 origin_;
  double resolution_;
  int rows_;
  int cols_;
};

/// Tri-state layer: -1 occupied, +1 free, 0 unexplored. Indexed (iy, ix).
using TriStateMap = Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr std::int8_t kOccupied = -1;
inline constexpr std::int8_t kUnexplored = 0;
inline constexpr std::int8_t kFree = 1;

struct RayTrace {
  std::vector<Cell> cells;
};

struct HitParams {
  double p_free = 0.4;
  double p_occupy = 0.4;
  double e_max = 5.0;
};

/// Cells from the tag cell to the anchor cell inclusive, 8-connected. The
/// traced cell set does not depend on the direction of travel.
RayTrace raycast(const GridGeometry& geometry, const Point2& p_tag, const Point2& p_anchor);

class OccupancyGrid {
 public:
  explicit OccupancyGrid(const GridGeometry& geometry);

  const GridGeometry& geometry() const { return geometry_; }
  /// Evidence accumulator, indexed (iy, ix).
  const Eigen::MatrixXd& evidence() const { return evidence_; }
  /// sgn(evidence), maintained for every touched cell.
  const TriStateMap& binary() const { return binary_; }

  double evidence(const Cell& c) const { return evidence_(c.iy, c.ix); }
  std::int8_t state(const Cell& c) const { return binary_(c.iy, c.ix); }

  void set_evidence(const Cell& c, double value, double e_max);

 private:
  GridGeometry geometry_;
  Eigen::MatrixXd evidence_;
  TriStateMap binary_;
};

/// Every ray cell gains p_free (clamped to e_max).
void update_los(OccupancyGrid& grid, const RayTrace& ray, const HitParams& params);

/// Ray cells that are not currently free lose p_occupy (clamped to -e_max).
/// The last cell (the anchor's) is never decremented.
void update_nlos(OccupancyGrid& grid, const RayTrace& ray, const HitParams& params);

/// As above, but the free-cell exemption is read from `reference` (for
/// example the last filtered map) instead of the grid's own binary layer.
void update_nlos(OccupancyGrid& grid, const RayTrace& ray, const HitParams& params, const TriStateMap& reference);

/// Serializes updates from several agents onto one grid.
class SharedGrid {
 public:
  explicit SharedGrid(const GridGeometry& geometry) : grid_(geometry) {}

  void update(const RayTrace& ray, bool los, const HitParams& params);
  void update(const RayTrace& ray, bool los, const HitParams& params, const TriStateMap& reference);
  /// Copy of the current grid.
  OccupancyGrid snapshot() const;

 private:
  mutable std::mutex mutex_;
  OccupancyGrid grid_;
};

/// -1 where evidence < 0, +1 where evidence > 0, 0 where evidence == 0.
TriStateMap binarize(const OccupancyGrid& grid);

struct FilterParams {
  int min_component_area = 3;
  int max_majority_sweeps = 100;
};

/// Majority smoothing (iterated to a fixed point), then morphological closing
/// of the occupied class, then removal of occupied components smaller than
/// min_component_area. Unexplored cells stay unexplored.
TriStateMap filter_binary(const TriStateMap& map, const FilterParams& params = {});

/// Individual stages, exposed for testing.
TriStateMap majority_filter(const TriStateMap& map, int max_sweeps = 100);
TriStateMap close_occupied(const TriStateMap& map);
TriStateMap remove_small_components(const TriStateMap& map, int min_area);

/// Plain PGM (P2): occupied 0, unexplored 128, free 255. Top row is max y.
void write_pgm(const TriStateMap& map, const std::filesystem::path& path);
/// CSV of per-cell values, one grid row per line, top row is max y.
void write_grid_csv(const Eigen::MatrixXd& values, const std::filesystem::path& path);
Eigen::MatrixXd read_grid_csv(const std::filesystem::path& path);
TriStateMap to_tri_state(const Eigen::MatrixXd& values);

}  // namespace rangeslam
