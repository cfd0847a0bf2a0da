#include "rangeslam/nlos_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "rangeslam/error.hpp"

namespace rangeslam {

Feature make_feature(const Channels& normalized) {
  return {normalized[0], normalized[2], normalized[1], 1.0};
}

double Kernel::operator()(const Feature& a, const Feature& b) const {
  if (type == KernelType::Linear) return a.dot(b);
  return std::exp(-gamma * (a - b).squaredNorm());
}

SvmModel::SvmModel(double c_reg, const Feature& w, bool converged)
    : kernel_(Kernel::linear()), c_reg_(c_reg), w_(w), converged_(converged) {}

SvmModel::SvmModel(Kernel kernel, double c_reg, std::vector<Feature> support, std::vector<double> coef,
                   double bias, bool converged)
    : kernel_(kernel),
      c_reg_(c_reg),
      support_(std::move(support)),
      coef_(std::move(coef)),
      bias_(bias),
      converged_(converged) {
  if (support_.size() != coef_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "support vectors and coefficients differ in count");
  }
  if (kernel_.type == KernelType::Linear) {
    // Collapse to the primal weights so decision() is a single dot product.
    for (std::size_t j = 0; j < support_.size(); ++j) w_ += coef_[j] * support_[j];
    w_[3] += bias_;
    support_.clear();
    coef_.clear();
    bias_ = 0.0;
  }
}

double SvmModel::decision(const Feature& x) const {
  if (kernel_.type == KernelType::Linear) return w_.dot(x);
  double value = bias_;
  for (std::size_t j = 0; j < support_.size(); ++j) value += coef_[j] * kernel_(support_[j], x);
  return value;
}

bool operator==(const SvmModel& a, const SvmModel& b) {
  return a.kernel_.type == b.kernel_.type && a.kernel_.gamma == b.kernel_.gamma && a.c_reg_ == b.c_reg_ &&
         a.w_ == b.w_ && a.support_ == b.support_ && a.coef_ == b.coef_ && a.bias_ == b.bias_ &&
         a.converged_ == b.converged_;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kTau = 1e-12;

// Q_ij = y_i y_j K(x_i, x_j). Held densely for the dataset sizes this library
// trains on (a few thousand frames); larger sets recompute rows on demand.
class QMatrix {
 public:
  QMatrix(std::span<const LabeledSample> samples, const Kernel& kernel)
      : samples_(samples), kernel_(kernel), n_(samples.size()), diag_(n_) {
    dense_ = n_ <= kDenseLimit;
    if (dense_) {
      q_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
          const double v = entry(i, j);
          q_(i, j) = v;
          q_(j, i) = v;
        }
      }
    } else {
      row_.resize(static_cast<Eigen::Index>(n_));
    }
    for (std::size_t i = 0; i < n_; ++i) diag_[static_cast<Eigen::Index>(i)] = entry(i, i);
  }

  double diag(std::size_t i) const { return diag_[static_cast<Eigen::Index>(i)]; }

  // Returned view is valid until the next call.
  Eigen::Ref<const Eigen::VectorXd> row(std::size_t i) {
    if (dense_) return q_.col(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < n_; ++j) row_[static_cast<Eigen::Index>(j)] = entry(i, j);
    return row_;
  }

 private:
  static constexpr std::size_t kDenseLimit = 5000;

  double entry(std::size_t i, std::size_t j) const {
    return samples_[i].y * samples_[j].y * kernel_(samples_[i].x, samples_[j].x);
  }

  std::span<const LabeledSample> samples_;
  Kernel kernel_;
  std::size_t n_;
  bool dense_ = true;
  Eigen::MatrixXd q_;
  Eigen::VectorXd row_;
  Eigen::VectorXd diag_;
};

}  // namespace

SvmModel train(std::span<const LabeledSample> samples, const TrainParams& params) {
  if (samples.size() < 2) throw Error(ErrorKind::EmptyDataset, "need at least two samples");
  if (!(params.c_reg > 0.0)) throw Error(ErrorKind::InvalidArgument, "C must be positive");
  if (params.kernel.type == KernelType::Gaussian && !(params.kernel.gamma > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "gamma must be positive");
  }
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& s : samples) {
    if (s.y != kLos && s.y != kNlos) throw Error(ErrorKind::InvalidArgument, "labels must be +1 or -1");
    (s.y > 0 ? has_pos : has_neg) = true;
  }
  if (!(has_pos && has_neg)) throw Error(ErrorKind::SingleClassDataset, "training data holds one class");

  const std::size_t n = samples.size();
  const double c = params.c_reg;
  QMatrix q(samples, params.kernel);

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = samples[i].y;

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), -1.0);

  auto at_upper = [&](std::size_t t) { return alpha[t] >= c; };
  auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
  auto objective = [&] { return 0.5 * alpha.dot(grad - Eigen::VectorXd::Ones(grad.size())); };

  const std::size_t max_iter = params.max_passes * n;
  bool converged = false;
  double last_objective = 0.0;

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // i maximizes -y_t G_t over I_up.
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      const bool up = y[t] > 0 ? !at_upper(t) : !at_lower(t);
      if (up && -y[t] * grad[t] >= gmax) {
        gmax = -y[t] * grad[t];
        i = t;
      }
    }
    if (i == n) {
      converged = true;
      break;
    }
    const auto qi = q.row(i);

    // j minimizes the second-order objective decrease over I_low.
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const bool low = y[t] > 0 ? !at_lower(t) : !at_upper(t);
      if (!low) continue;
      const double v = y[t] * grad[t];
      gmax2 = std::max(gmax2, v);
      const double diff = gmax + v;
      if (diff > 0.0) {
        double quad = q.diag(i) + q.diag(t) - 2.0 * y[i] * y[t] * qi[t];
        if (quad <= 0.0) quad = kTau;
        const double gain = -(diff * diff) / quad;
        if (gain <= best) {
          best = gain;
          j = t;
        }
      }
    }
    if (gmax + gmax2 < params.kkt_tolerance || j == n) {
      converged = true;
      break;
    }

    const Eigen::VectorXd qi_copy = qi;  // row(j) may overwrite the on-demand buffer
    const auto qj = q.row(j);
    const double old_ai = alpha[i];
    const double old_aj = alpha[j];

    if (y[i] != y[j]) {
      double quad = q.diag(i) + q.diag(j) + 2.0 * qi_copy[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = q.diag(i) + q.diag(j) - 2.0 * qi_copy[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }

    grad += (alpha[i] - old_ai) * qi_copy + (alpha[j] - old_aj) * qj;

    if ((iter + 1) % n == 0) {
      const double obj = objective();
      if (iter + 1 > n && std::abs(last_objective - obj) < params.objective_tolerance) {
        converged = true;
        break;
      }
      last_objective = obj;
    }
  }

  // Bias from free multipliers, midpoint of the feasible interval otherwise.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (at_upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);

  std::vector<Feature> support;
  std::vector<double> coef;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) {
      support.push_back(samples[t].x);
      coef.push_back(alpha[t] * y[t]);
    }
  }
  return SvmModel(params.kernel, c, std::move(support), std::move(coef), -rho, converged);
}

// ---------------------------------------------------------------------------

LosDecision classify(const SvmModel& model, const Feature& x) {
  LosDecision out;
  out.score = model.decision(x);
  out.label = out.score >= 0.0 ? kLos : kNlos;
  return out;
}

LosDecision classify(const SvmModel& model, const Eigen::VectorXd& x) {
  if (x.size() != 4 || x[3] != 1.0) {
    throw Error(ErrorKind::DimensionMismatch, "expected homogenized [d, Fp, Rx, 1] input of size 4, got size " +
                                                  std::to_string(x.size()));
  }
  return classify(model, Feature(x));
}

double score_to_weight(double score, double lambda) { return 0.5 * (1.0 + std::tanh(lambda * score)); }

Evaluation evaluate(const SvmModel& model, std::span<const LabeledSample> samples) {
  if (samples.empty()) throw Error(ErrorKind::EmptyDataset, "no samples to evaluate");
  Evaluation e;
  for (const auto& s : samples) {
    const int label = classify(model, s.x).label;
    if (s.y == kLos) (label == kLos ? e.tp : e.fn)++;
    else (label == kNlos ? e.tn : e.fp)++;
  }
  e.accuracy = static_cast<double>(e.tp + e.tn) / static_cast<double>(e.total());
  return e;
}

double hinge_objective(const Feature& w, double c_reg, std::span<const LabeledSample> samples) {
  double loss = 0.0;
  for (const auto& s : samples) loss += std::max(0.0, 1.0 - s.y * w.dot(s.x));
  return 0.5 * w.squaredNorm() + c_reg * loss;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json to_json(const Feature& f) { return {f[0], f[1], f[2], f[3]}; }

Feature feature_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw Error(ErrorKind::SchemaError, "feature vectors have four components");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

void save_model(const SvmModel& model, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format"] = "rangeslam-svm";
  doc["c_reg"] = model.c_reg();
  doc["converged"] = model.converged();
  if (model.kernel().type == KernelType::Linear) {
    doc["kernel"] = "linear";
    doc["weights"] = to_json(model.weights());
  } else {
    doc["kernel"] = "gaussian";
    doc["gamma"] = model.kernel().gamma;
    doc["bias"] = model.bias();
    auto& sv = doc["support"] = nlohmann::json::array();
    for (std::size_t j = 0; j < model.support().size(); ++j) {
      sv.push_back({{"coef", model.coefficients()[j]}, {"x", to_json(model.support()[j])}});
    }
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InputError, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

SvmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InputError, "cannot open " + path.string());
  try {
    const auto doc = nlohmann::json::parse(in);
    const auto kernel = doc.at("kernel").get<std::string>();
    const double c = doc.at("c_reg").get<double>();
    const bool converged = doc.value("converged", true);
    if (kernel == "linear") return SvmModel(c, feature_from_json(doc.at("weights")), converged);
    if (kernel != "gaussian") throw Error(ErrorKind::SchemaError, "unknown kernel '" + kernel + "'");
    std::vector<Feature> support;
    std::vector<double> coef;
    for (const auto& sv : doc.at("support")) {
      support.push_back(feature_from_json(sv.at("x")));
      coef.push_back(sv.at("coef").get<double>());
    }
    return SvmModel(Kernel::gaussian(doc.at("gamma").get<double>()), c, std::move(support), std::move(coef),
                    doc.at("bias").get<double>(), converged);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
  }
}

std::vector<LabeledSample> build_training_set(std::span<const FrameRecord> records, const ChannelStats& stats,
                                              const PipelineParams& params) {
  std::map<int, SensorPipeline> pipelines;
  std::vector<LabeledSample> out;
  for (const auto& r : records) {
    auto it = pipelines.try_emplace(r.agent, stats, params).first;
    const ProcessedFrame pf = it->second.process(r.frame);
    if (pf.status != FrameStatus::Ready) continue;
    out.push_back({make_feature(pf.smoothed), r.label >= 0 ? kLos : kNlos});
  }
  return out;
}

}  // namespace rangeslam
