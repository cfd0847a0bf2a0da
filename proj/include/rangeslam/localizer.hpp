#pragma once

// Per-frame tag localization: a stacked weighted least-squares problem over
// the state (position, velocity) with a range term weighted by NLOS scores,
// a constant-velocity motion term and a range term weighted by the prior map.
// Solved with Levenberg-Marquardt using an analytic Jacobian.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "rangeslam/grid_mapper.hpp"

namespace rangeslam {

/// State vector layout: [x, y, vx, vy].
using StateVector = Eigen::Vector4d;

struct AgentState {
  Point2 p = Point2::Zero();
  Eigen::Vector2d u = Eigen::Vector2d::Zero();
  double timestamp = 0.0;

  StateVector vector() const { return {p.x(), p.y(), u.x(), u.y()}; }
  static AgentState from_vector(const StateVector& x, double timestamp) {
    return {x.head<2>(), x.tail<2>(), timestamp};
  }
};

struct Anchor {
  int id = 0;
  Point2 position = Point2::Zero();
};

class AnchorConfig {
 public:
  AnchorConfig() = default;
  /// Ids must be unique; positions pairwise distinct; at least two anchors.
  explicit AnchorConfig(std::vector<Anchor> anchors);

  const std::vector<Anchor>& anchors() const { return anchors_; }
  std::size_t size() const { return anchors_.size(); }
  /// Throws InvalidArgument for unknown ids.
  const Point2& position(int id) const;
  bool contains(int id) const;
  Point2 centroid() const;

 private:
  std::vector<Anchor> anchors_;
};

struct ObjectiveWeights {
  std::array<double, 3> rho{1.0, 0.25, 0.5};  // NLOS, motion, map
  double lambda = 2.0;                        // beta sharpness
  double zeta = 1.0;                          // map influence in [0, 1]
  double motion_noise = 0.05;                 // m; absorbed into rho[1], not applied separately

  void validate() const;
};

struct RangeObservation {
  int anchor_id = 0;
  double distance = 0.0;  // smoothed range (m)
  double beta = 1.0;
  double alpha = 1.0;
};

struct SolverOptions {
  double step_tolerance = 1e-8;
  int max_iterations = 100;
  double initial_damping = 1e-3;
  double damping_factor = 10.0;
};

struct Estimate {
  AgentState state;
  bool converged = true;
  int iterations = 0;
  double initial_cost = 0.0;  // 1/2 |r|^2 at the starting point
  double final_cost = 0.0;
};

/// Constant-velocity prediction: p + u dt, u unchanged. Throws NonPositiveDt.
AgentState predict(const AgentState& prev, double dt);

struct RayOccupancy {
  int occupied = 0;
  int total = 0;
};

RayOccupancy ray_occupancy(const GridGeometry& geometry, const TriStateMap& map, const Point2& p_est,
                           const Point2& anchor);

/// 1 - zeta * occupied / total along the ray from the estimate to the anchor.
double map_weight(const GridGeometry& geometry, const TriStateMap& map, const Point2& p_est, const Point2& anchor,
                  double zeta);

/// The residual stack for one frame. Rows: for each observation the NLOS row
/// then the map row, followed by four motion rows.
class RangeProblem {
 public:
  RangeProblem(std::span<const RangeObservation> observations, const AgentState& prev, double dt,
               const AnchorConfig& anchors, const ObjectiveWeights& weights);

  Eigen::Index residual_count() const { return static_cast<Eigen::Index>(2 * rows_.size() + 4); }
  const StateVector& initial_guess() const { return initial_; }

  template <typename Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> residuals(const Eigen::Matrix<Scalar, 4, 1>& x) const;

  Eigen::Matrix<double, Eigen::Dynamic, 4> jacobian(const StateVector& x) const;

  double cost(const StateVector& x) const { return 0.5 * residuals<double>(x).squaredNorm(); }

 private:
  struct Row {
    Point2 anchor;
    double distance;
    double sqrt_nlos;
    double sqrt_map;
  };

  std::vector<Row> rows_;
  Point2 predicted_p_;
  Eigen::Vector2d prev_u_;
  double sqrt_motion_;
  StateVector initial_;
};

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> RangeProblem::residuals(const Eigen::Matrix<Scalar, 4, 1>& x) const {
  using std::sqrt;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> r(residual_count());
  Eigen::Index k = 0;
  for (const auto& row : rows_) {
    const Scalar dx = x[0] - Scalar(row.anchor.x());
    const Scalar dy = x[1] - Scalar(row.anchor.y());
    const Scalar err = Scalar(row.distance) - sqrt(dx * dx + dy * dy);
    r[k++] = Scalar(row.sqrt_nlos) * err;
    r[k++] = Scalar(row.sqrt_map) * err;
  }
  const Scalar s(sqrt_motion_);
  r[k++] = s * (x[0] - Scalar(predicted_p_.x()));
  r[k++] = s * (x[1] - Scalar(predicted_p_.y()));
  r[k++] = s * (x[2] - Scalar(prev_u_.x()));
  r[k++] = s * (x[3] - Scalar(prev_u_.y()));
  return r;
}

/// Levenberg-Marquardt from predict(prev, dt). Throws Underdetermined when
/// there are no observations and the motion weight is zero.
Estimate solve(std::span<const RangeObservation> observations, const AgentState& prev, double dt,
               const AnchorConfig& anchors, const ObjectiveWeights& weights, const SolverOptions& options = {});

/// Same problem with the map term switched off.
Estimate wls_baseline(std::span<const RangeObservation> observations, const AgentState& prev, double dt,
                      const AnchorConfig& anchors, const ObjectiveWeights& weights,
                      const SolverOptions& options = {});

}  // namespace rangeslam
