#include "rangeslam/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "rangeslam/error.hpp"

namespace rangeslam {

MapScore score_counts(const ConfusionCounts& c) {
  MapScore s;
  s.counts = c;
  const auto total = static_cast<double>(c.total());
  s.accuracy = total > 0 ? static_cast<double>(c.tp + c.tn) / total : 0.0;
  s.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  s.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  const std::size_t f1_den = 2 * c.tp + c.fp + c.fn;
  s.f1 = f1_den > 0 ? 2.0 * static_cast<double>(c.tp) / static_cast<double>(f1_den) : 0.0;
  return s;
}

MapScore map_metrics(const TriStateMap& estimated, const TriStateMap& truth, CellPolicy policy) {
  if (estimated.rows() != truth.rows() || estimated.cols() != truth.cols()) {
    throw Error(ErrorKind::GeometryMismatch, "estimated and truth maps differ in size");
  }
  ConfusionCounts c;
  for (Eigen::Index r = 0; r < truth.rows(); ++r) {
    for (Eigen::Index col = 0; col < truth.cols(); ++col) {
      const auto t = truth(r, col);
      if (t == kUnexplored) throw Error(ErrorKind::InvalidArgument, "truth map has unexplored cells");
      auto e = estimated(r, col);
      if (e == kUnexplored) {
        if (policy == CellPolicy::ExploredOnly) continue;
        e = kFree;
      }
      const bool truth_occ = t == kOccupied;
      const bool est_occ = e == kOccupied;
      if (truth_occ) (est_occ ? c.tp : c.fn)++;
      else (est_occ ? c.fp : c.tn)++;
    }
  }
  return score_counts(c);
}

TriStateMap rasterize_truth(const GridGeometry& geometry, std::span<const Rect> obstacles) {
  TriStateMap out = TriStateMap::Constant(geometry.rows(), geometry.cols(), kFree);
  for (int iy = 0; iy < geometry.rows(); ++iy) {
    for (int ix = 0; ix < geometry.cols(); ++ix) {
      const Point2 center = geometry.cell_center({ix, iy});
      for (const auto& o : obstacles) {
        if (o.interior_contains(center)) {
          out(iy, ix) = kOccupied;
          break;
        }
      }
    }
  }
  return out;
}

double ate_rmse(std::span<const TimedPoint> estimated, std::span<const TimedPoint> truth, double max_dt) {
  double sum_sq = 0.0;
  std::size_t pairs = 0;
  std::size_t j = 0;
  for (const auto& e : estimated) {
    while (j + 1 < truth.size() &&
           std::abs(truth[j + 1].timestamp - e.timestamp) <= std::abs(truth[j].timestamp - e.timestamp)) {
      ++j;
    }
    if (j < truth.size() && std::abs(truth[j].timestamp - e.timestamp) < max_dt) {
      sum_sq += (e.p - truth[j].p).squaredNorm();
      ++pairs;
    }
  }
  if (pairs == 0) throw Error(ErrorKind::NoOverlap, "no time-aligned pairs between trajectories");
  return 100.0 * std::sqrt(sum_sq / static_cast<double>(pairs));
}

double identification_report(const std::vector<bool>& presented, const std::vector<bool>& truth) {
  if (presented.size() != truth.size() || presented.empty()) {
    throw Error(ErrorKind::LengthMismatch, "label streams must have equal, non-zero length");
  }
  std::size_t agree = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) agree += presented[i] == truth[i] ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(truth.size());
}

}  // namespace rangeslam
