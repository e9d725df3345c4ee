#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gulf/data.hpp"
#include "gulf/losses.hpp"
#include "gulf/models.hpp"
#include "gulf/trainers.hpp"

namespace gulf {

struct Evaluation {
  double mean_loss = 0.0;
  double error_rate = 0.0;
};

// Mean loss and misclassification rate (argmax, ties to the lowest class).
Evaluation evaluate(const MlpModel& model, const Dataset& data, const LossFn& loss);

// mean L_y(f(theta; x)) + (lambda / 2) |theta|^2 / alpha
double alpha_regularized_loss(const MlpModel& model, const Dataset& data, const LossFn& loss,
                              double lambda, double alpha);
Vector alpha_regularized_loss_grad(const MlpModel& model, const Dataset& data, const LossFn& loss,
                                   double lambda, double alpha);

struct StageRecord {
  std::size_t stage = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_error = 0.0;
  double test_error = 0.0;
  double reg_alpha_loss = 0.0;
  double param_norm_sq = 0.0;
  bool operator==(const StageRecord&) const = default;
};

struct StageTrajectory {
  std::vector<StageRecord> records;
  void validate() const;
};

// One record per checkpoint; stage indices start at `first_stage`.
StageTrajectory record_trajectory(std::span<const MlpModel> checkpoints, const Dataset& train,
                                  const Dataset& test, const LossFn& loss, double lambda, double alpha,
                                  std::size_t first_stage = 1);

inline constexpr const char* kTrajectoryHeader =
    "stage,train_loss,test_loss,train_err,test_err,reg_alpha_loss,param_norm_sq";

std::string trajectory_to_csv(const StageTrajectory& trajectory);
StageTrajectory trajectory_from_csv(const std::string& text);
void write_trajectory_csv(const StageTrajectory& trajectory, const std::filesystem::path& path);

// Mean of the per-model softmax outputs.
Matrix ensemble_predict(std::span<const MlpModel> models, const Matrix& x);
double ensemble_error(std::span<const MlpModel> models, const Dataset& data);

struct DescentCheckConfig {
  double eta = 0.0;     // step size; Q_t assumed 1/eta smooth
  double alpha = 0.3;   // in (0, beta]
  double beta = 1.0;    // 1 for the loss-as-generator (GULF2) case
  std::size_t stages = 20;
  std::size_t inner_steps = 50;
  double slack_tolerance = 1e-9;
  void validate() const;
};

struct DescentStage {
  std::size_t stage = 0;
  double reg_loss = 0.0;        // l_alpha(theta_t)
  double grad_norm_sq = 0.0;    // |grad l_alpha(theta_t)|^2
  double next_reg_loss = 0.0;   // l_alpha(theta_{t+1})
  double slack = 0.0;           // l_t - (alpha eta / 2) g_t - l_{t+1}
};

struct DescentReport {
  std::vector<DescentStage> stages;
  double min_slack = 0.0;
  double mean_grad_norm_sq = 0.0;  // (1/T) sum_t |grad l_alpha(theta_t)|^2
  double averaged_bound = 0.0;     // 2 (l_alpha(theta_0) - l_alpha(theta_T)) / (alpha eta T)
  bool averaged_bound_holds = false;
  bool passed = false;
};

// Largest Hessian eigenvalue of the regularized mean loss at `model`, via
// power iteration on finite-difference Hessian-vector products.
double estimate_smoothness(const MlpModel& model, const Dataset& data, const LossFn& loss, double lambda,
                           std::uint64_t seed = 0);

// Runs the loss-as-generator method with full-batch inner gradient descent.
// Each stage takes theta~ = theta_t - eta grad Q_t(theta_t) as its first step
// and then only accepts steps that decrease Q_t. Throws HypothesisViolation
// if Q_t(theta~) > Q_t(theta_t), i.e. eta is too large.
DescentReport theorem21_descent_check(const MlpModel& theta0, const Dataset& data, const LossFn& loss,
                                      const DescentCheckConfig& cfg, double lambda);
// Same, starting from init_random(arch, seed).
DescentReport theorem21_descent_check(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss,
                                      const DescentCheckConfig& cfg, double lambda, std::uint64_t seed);

}  // namespace gulf
