#include "rangeslam/localizer.hpp"

#include <algorithm>
#include <Eigen/Cholesky>

#include "rangeslam/error.hpp"

namespace rangeslam {

AnchorConfig::AnchorConfig(std::vector<Anchor> anchors) : anchors_(std::move(anchors)) {
  if (anchors_.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two anchors");
  for (std::size_t i = 0; i < anchors_.size(); ++i) {
    if (!anchors_[i].position.allFinite()) throw Error(ErrorKind::InvalidArgument, "anchor position not finite");
    for (std::size_t j = 0; j < i; ++j) {
      if (anchors_[i].id == anchors_[j].id) {
        throw Error(ErrorKind::InvalidArgument, "duplicate anchor id " + std::to_string(anchors_[i].id));
      }
      if (anchors_[i].position == anchors_[j].position) {
        throw Error(ErrorKind::InvalidArgument, "anchors " + std::to_string(anchors_[i].id) + " and " +
                                                    std::to_string(anchors_[j].id) + " coincide");
      }
    }
  }
}

const Point2& AnchorConfig::position(int id) const {
  for (const auto& a : anchors_) {
    if (a.id == id) return a.position;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown anchor id " + std::to_string(id));
}

bool AnchorConfig::contains(int id) const {
  return std::any_of(anchors_.begin(), anchors_.end(), [id](const Anchor& a) { return a.id == id; });
}

Point2 AnchorConfig::centroid() const {
  Point2 c = Point2::Zero();
  for (const auto& a : anchors_) c += a.position;
  return anchors_.empty() ? c : Point2(c / static_cast<double>(anchors_.size()));
}

void ObjectiveWeights::validate() const {
  if (std::any_of(rho.begin(), rho.end(), [](double r) { return !(r >= 0.0); })) {
    throw Error(ErrorKind::InvalidArgument, "rho weights must be non-negative");
  }
  if (std::all_of(rho.begin(), rho.end(), [](double r) { return r == 0.0; })) {
    throw Error(ErrorKind::InvalidArgument, "at least one rho weight must be positive");
  }
  if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda must be positive");
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "zeta must lie in [0, 1]");
  if (!(motion_noise >= 0.0)) throw Error(ErrorKind::InvalidArgument, "motion noise must be non-negative");
}

AgentState predict(const AgentState& prev, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::NonPositiveDt, "dt must be positive, got " + std::to_string(dt));
  return {prev.p + prev.u * dt, prev.u, prev.timestamp + dt};
}

RayOccupancy ray_occupancy(const GridGeometry& geometry, const TriStateMap& map, const Point2& p_est,
                           const Point2& anchor) {
  if (map.rows() != geometry.rows() || map.cols() != geometry.cols()) {
    throw Error(ErrorKind::GeometryMismatch, "map size does not match geometry");
  }
  const RayTrace ray = raycast(geometry, p_est, anchor);
  RayOccupancy out;
  out.total = static_cast<int>(ray.cells.size());
  for (const auto& c : ray.cells) out.occupied += map(c.iy, c.ix) == kOccupied ? 1 : 0;
  return out;
}

double map_weight(const GridGeometry& geometry, const TriStateMap& map, const Point2& p_est, const Point2& anchor,
                  double zeta) {
  const auto occ = ray_occupancy(geometry, map, p_est, anchor);
  return 1.0 - zeta * static_cast<double>(occ.occupied) / static_cast<double>(occ.total);
}

// ---------------------------------------------------------------------------

RangeProblem::RangeProblem(std::span<const RangeObservation> observations, const AgentState& prev, double dt,
                           const AnchorConfig& anchors, const ObjectiveWeights& weights) {
  weights.validate();
  if (observations.empty() && weights.rho[1] == 0.0) {
    throw Error(ErrorKind::Underdetermined, "no observations and no motion term");
  }
  rows_.reserve(observations.size());
  for (const auto& obs : observations) {
    if (!(obs.beta >= 0.0 && obs.beta <= 1.0) || !(obs.alpha >= 0.0 && obs.alpha <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "observation weights must lie in [0, 1]");
    }
    rows_.push_back({anchors.position(obs.anchor_id), obs.distance, std::sqrt(weights.rho[0] * obs.beta),
                     std::sqrt(weights.rho[2] * obs.alpha)});
  }
  const AgentState pred = predict(prev, dt);
  predicted_p_ = pred.p;
  prev_u_ = prev.u;
  sqrt_motion_ = std::sqrt(weights.rho[1]);
  initial_ = pred.vector();
}

Eigen::Matrix<double, Eigen::Dynamic, 4> RangeProblem::jacobian(const StateVector& x) const {
  Eigen::Matrix<double, Eigen::Dynamic, 4> j = Eigen::Matrix<double, Eigen::Dynamic, 4>::Zero(residual_count(), 4);
  Eigen::Index k = 0;
  for (const auto& row : rows_) {
    const Point2 diff = x.head<2>() - row.anchor;
    const double range = diff.norm();
    // d/dp of -|p - a| is -(p - a)/|p - a|; zero at the anchor itself.
    const Eigen::RowVector2d g = range > 0.0 ? Eigen::RowVector2d(-diff.transpose() / range)
                                             : Eigen::RowVector2d::Zero();
    j.block<1, 2>(k++, 0) = row.sqrt_nlos * g;
    j.block<1, 2>(k++, 0) = row.sqrt_map * g;
  }
  j.block<4, 4>(k, 0).diagonal().setConstant(sqrt_motion_);
  return j;
}

Estimate solve(std::span<const RangeObservation> observations, const AgentState& prev, double dt,
               const AnchorConfig& anchors, const ObjectiveWeights& weights, const SolverOptions& options) {
  const RangeProblem problem(observations, prev, dt, anchors, weights);

  StateVector x = problem.initial_guess();
  Eigen::VectorXd r = problem.residuals<double>(x);
  double cost = 0.5 * r.squaredNorm();

  Estimate out;
  out.initial_cost = cost;
  out.converged = false;
  double damping = options.initial_damping;

  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const auto j = problem.jacobian(x);
    const Eigen::Matrix4d jtj = j.transpose() * j;
    const Eigen::Vector4d jtr = j.transpose() * r;
    const StateVector step = (jtj + damping * Eigen::Matrix4d::Identity()).ldlt().solve(-jtr);
    if (!step.allFinite()) break;

    const StateVector candidate = x + step;
    const Eigen::VectorXd r_candidate = problem.residuals<double>(candidate);
    const double candidate_cost = 0.5 * r_candidate.squaredNorm();
    if (candidate_cost <= cost) {
      x = candidate;
      r = r_candidate;
      cost = candidate_cost;
      damping = std::max(damping / options.damping_factor, 1e-12);
    } else {
      damping *= options.damping_factor;
    }
    if (step.norm() < options.step_tolerance) {
      out.converged = true;
      ++iter;
      break;
    }
  }

  out.state = AgentState::from_vector(x, prev.timestamp + dt);
  out.iterations = iter;
  out.final_cost = cost;
  return out;
}

Estimate wls_baseline(std::span<const RangeObservation> observations, const AgentState& prev, double dt,
                      const AnchorConfig& anchors, const ObjectiveWeights& weights, const SolverOptions& options) {
  ObjectiveWeights no_map = weights;
  no_map.rho[2] = 0.0;
  return solve(observations, prev, dt, anchors, no_map, options);
}

}  // namespace rangeslam
