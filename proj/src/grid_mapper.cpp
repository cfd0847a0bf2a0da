#include "rangeslam/grid_mapper.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "csv.hpp"
#include "rangeslam/error.hpp"

namespace rangeslam {

GridGeometry::GridGeometry(Point2 origin, double resolution, int rows, int cols)
    : origin_(std::move(origin)), resolution_(resolution), rows_(rows), cols_(cols) {
  if (!(resolution_ > 0.0)) throw Error(ErrorKind::InvalidArgument, "grid resolution must be positive");
  if (rows_ <= 0 || cols_ <= 0) throw Error(ErrorKind::InvalidArgument, "grid must have at least one cell");
}

bool GridGeometry::contains(const Point2& p) const {
  const Point2 rel = (p - origin_) / resolution_;
  return rel.x() >= 0.0 && rel.y() >= 0.0 && rel.x() < cols_ && rel.y() < rows_;
}

Cell GridGeometry::to_cell(const Point2& p) const {
  if (!contains(p)) {
    std::ostringstream msg;
    msg << "point (" << p.x() << ", " << p.y() << ") lies outside the grid";
    throw Error(ErrorKind::OutOfBounds, msg.str());
  }
  const Point2 rel = (p - origin_) / resolution_;
  return {static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y()))};
}

Point2 GridGeometry::cell_center(const Cell& c) const {
  return origin_ + resolution_ * Point2(c.ix + 0.5, c.iy + 0.5);
}

Point2 GridGeometry::clamp(const Point2& p) const {
  // Stay a hair inside the far edges so to_cell never rounds onto them.
  const double eps = 1e-9 * resolution_;
  const Point2 hi = origin_ + resolution_ * Point2(cols_, rows_) - Point2::Constant(eps);
  return p.cwiseMax(origin_).cwiseMin(hi);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Cell> bresenham(Cell a, Cell b) {
  std::vector<Cell> cells;
  const int dx = std::abs(b.ix - a.ix);
  const int dy = -std::abs(b.iy - a.iy);
  const int sx = a.ix < b.ix ? 1 : -1;
  const int sy = a.iy < b.iy ? 1 : -1;
  int err = dx + dy;
  cells.reserve(static_cast<std::size_t>(std::max(dx, -dy) + 1));
  while (true) {
    cells.push_back(a);
    if (a == b) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      a.ix += sx;
    }
    if (e2 <= dx) {
      err += dx;
      a.iy += sy;
    }
  }
  return cells;
}

}  // namespace

RayTrace raycast(const GridGeometry& geometry, const Point2& p_tag, const Point2& p_anchor) {
  const Cell from = geometry.to_cell(p_tag);
  const Cell to = geometry.to_cell(p_anchor);
  // Always rasterize from the smaller endpoint so a->b and b->a agree.
  if (to < from) {
    auto cells = bresenham(to, from);
    std::reverse(cells.begin(), cells.end());
    return {std::move(cells)};
  }
  return {bresenham(from, to)};
}

// ---------------------------------------------------------------------------

OccupancyGrid::OccupancyGrid(const GridGeometry& geometry)
    : geometry_(geometry),
      evidence_(Eigen::MatrixXd::Zero(geometry.rows(), geometry.cols())),
      binary_(TriStateMap::Zero(geometry.rows(), geometry.cols())) {}

void OccupancyGrid::set_evidence(const Cell& c, double value, double e_max) {
  const double v = std::clamp(value, -e_max, e_max);
  evidence_(c.iy, c.ix) = v;
  binary_(c.iy, c.ix) = v > 0.0 ? kFree : (v < 0.0 ? kOccupied : kUnexplored);
}

void update_los(OccupancyGrid& grid, const RayTrace& ray, const HitParams& params) {
  for (const auto& c : ray.cells) grid.set_evidence(c, grid.evidence(c) + params.p_free, params.e_max);
}

void update_nlos(OccupancyGrid& grid, const RayTrace& ray, const HitParams& params) {
  if (ray.cells.empty()) return;
  for (std::size_t k = 0; k + 1 < ray.cells.size(); ++k) {
    const Cell& c = ray.cells[k];
    if (grid.state(c) == kFree) continue;
    grid.set_evidence(c, grid.evidence(c) - params.p_occupy, params.e_max);
  }
}

void update_nlos(OccupancyGrid& grid, const RayTrace& ray, const HitParams& params, const TriStateMap& reference) {
  if (ray.cells.empty()) return;
  for (std::size_t k = 0; k + 1 < ray.cells.size(); ++k) {
    const Cell& c = ray.cells[k];
    if (reference(c.iy, c.ix) == kFree) continue;
    grid.set_evidence(c, grid.evidence(c) - params.p_occupy, params.e_max);
  }
}

void SharedGrid::update(const RayTrace& ray, bool los, const HitParams& params) {
  std::lock_guard lock(mutex_);
  if (los) update_los(grid_, ray, params);
  else update_nlos(grid_, ray, params);
}

void SharedGrid::update(const RayTrace& ray, bool los, const HitParams& params, const TriStateMap& reference) {
  std::lock_guard lock(mutex_);
  if (los) update_los(grid_, ray, params);
  else update_nlos(grid_, ray, params, reference);
}

OccupancyGrid SharedGrid::snapshot() const {
  std::lock_guard lock(mutex_);
  return grid_;
}

TriStateMap binarize(const OccupancyGrid& grid) {
  const auto& e = grid.evidence();
  TriStateMap out(e.rows(), e.cols());
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) {
      const double v = e(r, c);
      out(r, c) = v > 0.0 ? kFree : (v < 0.0 ? kOccupied : kUnexplored);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

TriStateMap majority_filter(const TriStateMap& map, int max_sweeps) {
  TriStateMap out = map;
  const Eigen::Index rows = out.rows();
  const Eigen::Index cols = out.cols();
  // In-place sweeps: each flip strictly lowers the neighbourhood disagreement
  // energy, so the iteration terminates at a fixed point.
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        const std::int8_t current = out(r, c);
        if (current == kUnexplored) continue;
        int sum = 0;
        for (Eigen::Index dr = -1; dr <= 1; ++dr) {
          for (Eigen::Index dc = -1; dc <= 1; ++dc) {
            const Eigen::Index rr = r + dr;
            const Eigen::Index cc = c + dc;
            if (rr >= 0 && cc >= 0 && rr < rows && cc < cols) sum += out(rr, cc);
          }
        }
        const std::int8_t next = sum > 0 ? kFree : (sum < 0 ? kOccupied : current);
        if (next != current) {
          out(r, c) = next;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return out;
}

namespace {

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

Mask dilate(const Mask& m) {
  Mask out = Mask::Constant(m.rows(), m.cols(), false);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!m(r, c)) continue;
      for (Eigen::Index rr = std::max<Eigen::Index>(r - 1, 0); rr <= std::min(r + 1, m.rows() - 1); ++rr) {
        for (Eigen::Index cc = std::max<Eigen::Index>(c - 1, 0); cc <= std::min(c + 1, m.cols() - 1); ++cc) {
          out(rr, cc) = true;
        }
      }
    }
  }
  return out;
}

// Cells beyond the border count as set, so erosion never eats the map edge.
Mask erode(const Mask& m) {
  Mask out = Mask::Constant(m.rows(), m.cols(), false);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      bool all = true;
      for (Eigen::Index rr = r - 1; rr <= r + 1 && all; ++rr) {
        for (Eigen::Index cc = c - 1; cc <= c + 1; ++cc) {
          if (rr >= 0 && cc >= 0 && rr < m.rows() && cc < m.cols() && !m(rr, cc)) {
            all = false;
            break;
          }
        }
      }
      out(r, c) = all;
    }
  }
  return out;
}

}  // namespace

TriStateMap close_occupied(const TriStateMap& map) {
  const Mask occupied = map.array() == kOccupied;
  const Mask closed = erode(dilate(occupied));
  TriStateMap out = map;
  for (Eigen::Index r = 0; r < map.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      if (closed(r, c) && map(r, c) != kUnexplored) out(r, c) = kOccupied;
    }
  }
  return out;
}

TriStateMap remove_small_components(const TriStateMap& map, int min_area) {
  TriStateMap out = map;
  const Eigen::Index rows = map.rows();
  const Eigen::Index cols = map.cols();
  Mask seen = Mask::Constant(rows, cols, false);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> component;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
  for (Eigen::Index r0 = 0; r0 < rows; ++r0) {
    for (Eigen::Index c0 = 0; c0 < cols; ++c0) {
      if (seen(r0, c0) || map(r0, c0) != kOccupied) continue;
      component.clear();
      stack.assign(1, {r0, c0});
      seen(r0, c0) = true;
      while (!stack.empty()) {
        const auto [r, c] = stack.back();
        stack.pop_back();
        component.emplace_back(r, c);
        for (Eigen::Index rr = std::max<Eigen::Index>(r - 1, 0); rr <= std::min(r + 1, rows - 1); ++rr) {
          for (Eigen::Index cc = std::max<Eigen::Index>(c - 1, 0); cc <= std::min(c + 1, cols - 1); ++cc) {
            if (!seen(rr, cc) && map(rr, cc) == kOccupied) {
              seen(rr, cc) = true;
              stack.emplace_back(rr, cc);
            }
          }
        }
      }
      if (static_cast<int>(component.size()) < min_area) {
        for (const auto& [r, c] : component) out(r, c) = kFree;
      }
    }
  }
  return out;
}

TriStateMap filter_binary(const TriStateMap& map, const FilterParams& params) {
  return remove_small_components(close_occupied(majority_filter(map, params.max_majority_sweeps)),
                                 params.min_component_area);
}

// ---------------------------------------------------------------------------

void write_pgm(const TriStateMap& map, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InputError, "cannot write " + path.string());
  out << "P2\n" << map.cols() << ' ' << map.rows() << "\n255\n";
  for (Eigen::Index r = map.rows() - 1; r >= 0; --r) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) {
      const int v = map(r, c) == kOccupied ? 0 : (map(r, c) == kFree ? 255 : 128);
      out << v << (c + 1 < map.cols() ? ' ' : '\n');
    }
  }
}

void write_grid_csv(const Eigen::MatrixXd& values, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InputError, "cannot write " + path.string());
  for (Eigen::Index r = values.rows() - 1; r >= 0; --r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      out << csv::format_double(values(r, c)) << (c + 1 < values.cols() ? ',' : '\n');
    }
  }
}

Eigen::MatrixXd read_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InputError, "cannot open " + path.string());
  std::vector<std::vector<double>> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = csv::trim(line);
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : csv::split(line)) {
      try {
        row.push_back(csv::parse_double(cell));
      } catch (const std::invalid_argument& e) {
        throw Error(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (!lines.empty() && row.size() != lines.front().size()) {
      throw Error(ErrorKind::SchemaError, path.string() + ":" + std::to_string(line_no) + ": ragged row");
    }
    lines.push_back(std::move(row));
  }
  if (lines.empty()) throw Error(ErrorKind::SchemaError, path.string() + ": empty grid");
  const auto rows = static_cast<Eigen::Index>(lines.size());
  const auto cols = static_cast<Eigen::Index>(lines.front().size());
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) out(rows - 1 - r, c) = lines[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return out;
}

TriStateMap to_tri_state(const Eigen::MatrixXd& values) {
  TriStateMap out(values.rows(), values.cols());
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double v = values(r, c);
      out(r, c) = v > 0.0 ? kFree : (v < 0.0 ? kOccupied : kUnexplored);
    }
  }
  return out;
}

}  // namespace rangeslam
