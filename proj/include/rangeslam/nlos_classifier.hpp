#pragma once

// Soft-margin SVM for LOS/NLOS identification, trained with SMO, plus the
// tanh mapping from decision score to residual weight.

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "rangeslam/sensor_pipeline.hpp"

namespace rangeslam {

/// Homogenized SVM input [d, Fp, Rx, 1] built from normalized channels.
using Feature = Eigen::Vector4d;

inline constexpr int kLos = 1;
inline constexpr int kNlos = -1;

/// Reorders normalized (d, rx, fp) channels into the feature layout.
Feature make_feature(const Channels& normalized);

struct LabeledSample {
  Feature x = Feature(0.0, 0.0, 0.0, 1.0);
  int y = kLos;
};

enum class KernelType { Linear, Gaussian };

struct Kernel {
  KernelType type = KernelType::Gaussian;
  double gamma = 0.5;

  static Kernel linear() { return {KernelType::Linear, 0.0}; }
  static Kernel gaussian(double gamma) { return {KernelType::Gaussian, gamma}; }

  double operator()(const Feature& a, const Feature& b) const;
};

struct TrainParams {
  Kernel kernel;
  double c_reg = 1.0;
  double kkt_tolerance = 1e-3;
  double objective_tolerance = 1e-6;
  std::size_t max_passes = 10000;
};

class SvmModel {
 public:
  /// Linear model with decision value w.x.
  SvmModel(double c_reg, const Feature& w, bool converged = true);
  /// Kernel model with decision value sum_j coef_j K(sv_j, x) + bias, coef_j = alpha_j y_j.
  SvmModel(Kernel kernel, double c_reg, std::vector<Feature> support, std::vector<double> coef,
           double bias, bool converged = true);

  const Kernel& kernel() const { return kernel_; }
  double c_reg() const { return c_reg_; }
  bool converged() const { return converged_; }

  /// Linear only: [w_d, w_fp, w_rx, b].
  const Feature& weights() const { return w_; }
  const std::vector<Feature>& support() const { return support_; }
  const std::vector<double>& coefficients() const { return coef_; }
  double bias() const { return bias_; }

  double decision(const Feature& x) const;

  friend bool operator==(const SvmModel& a, const SvmModel& b);

 private:
  Kernel kernel_;
  double c_reg_;
  Feature w_ = Feature::Zero();
  std::vector<Feature> support_;
  std::vector<double> coef_;
  double bias_ = 0.0;
  bool converged_ = true;
};

/// SMO with second-order working-set selection. Throws SingleClassDataset and
/// EmptyDataset; an iteration-capped run returns a model with converged() false.
SvmModel train(std::span<const LabeledSample> samples, const TrainParams& params = {});

struct LosDecision {
  int label = kLos;
  double score = 0.0;
  double beta = 0.5;
};

/// Label and score only; beta is left at its neutral value.
LosDecision classify(const SvmModel& model, const Feature& x);
/// Checks the homogenized layout (4 components, last equal to 1).
LosDecision classify(const SvmModel& model, const Eigen::VectorXd& x);

/// 1/2 (1 + tanh(lambda * score)).
double score_to_weight(double score, double lambda);

/// Positive class is LOS (+1).
struct Evaluation {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double accuracy = 0.0;

  std::size_t total() const { return tp + tn + fp + fn; }
};

Evaluation evaluate(const SvmModel& model, std::span<const LabeledSample> samples);

/// Primal soft-margin objective 1/2 |w|^2 + C sum hinge, linear models only.
double hinge_objective(const Feature& w, double c_reg, std::span<const LabeledSample> samples);

/// Runs labeled records through the sensor pipeline (one per agent) and keeps
/// the smoothed frames as training samples.
std::vector<LabeledSample> build_training_set(std::span<const FrameRecord> records, const ChannelStats& stats,
                                              const PipelineParams& params = {});

void save_model(const SvmModel& model, const std::filesystem::path& path);
SvmModel load_model(const std::filesystem::path& path);

}  // namespace rangeslam
