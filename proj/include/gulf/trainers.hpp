#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gulf/bregman.hpp"
#include "gulf/data.hpp"
#include "gulf/losses.hpp"
#include "gulf/models.hpp"

namespace gulf {

struct ScheduleSegment {
  std::size_t epochs = 1;
  double lr_multiplier = 1.0;
  bool operator==(const ScheduleSegment&) const = default;
};

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 128;
  std::vector<ScheduleSegment> schedule{{50, 1.0}, {10, 0.1}, {10, 0.01}};
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t total_epochs() const;
  bool operator==(const SgdConfig&) const = default;
};

enum class InitStrategy { kRandom, kBase, kBaseShrunk };

std::string_view to_string(InitStrategy s);
InitStrategy init_strategy_from_string(std::string_view name);
std::string_view to_string(GeneratorKind g);
GeneratorKind generator_kind_from_string(std::string_view name);

struct GulfConfig {
  double alpha = 0.3;
  std::size_t m = 1;  // guide steps; used by the half-squared-norm generator
  std::size_t stages = 1;
  GeneratorKind generator = GeneratorKind::kLossAsGenerator;
  InitStrategy init = InitStrategy::kRandom;
  double shrink_v = 2.0;
  SgdConfig sgd;

  void validate() const;
  bool operator==(const GulfConfig&) const = default;
};

// Frozen copy of theta_t for the duration of a stage.
struct FrozenReference {
  MlpModel model;
};

// Mean-over-batch gradient of the data term with respect to theta. The
// regularizer is added by sgd_run.
using BatchGradient = std::function<Vector(const MlpModel&, std::span<const std::size_t> batch)>;

// Observers used by tests and diagnostics. `gradient` is the full update
// gradient (data term plus weight decay) at `step`.
struct TrainingHooks {
  std::function<void(std::size_t stage, std::size_t step, std::span<const double> gradient)> on_step;
  // Guide targets computed for a batch (GULF methods only).
  std::function<void(std::size_t stage, const GuideTarget& targets)> on_guide;
  // Parameters a stage starts from.
  std::function<void(std::size_t stage, const MlpModel& start)> on_stage_start;
};

// Heavy-ball SGD over a fixed epoch schedule. The shuffle order depends only
// on (cfg.seed, stage); momentum starts at zero.
MlpModel sgd_run(MlpModel model, std::size_t dataset_size, const BatchGradient& objective,
                 const SgdConfig& cfg, std::size_t stage = 0, const TrainingHooks& hooks = {});

// Batch gradients of the individual training objectives.
BatchGradient regular_objective(const Dataset& data, const LossFn& loss);
BatchGradient soft_target_objective(const Dataset& data, const LossFn& loss,
                                    std::function<Vector(int label)> target);
BatchGradient gulf_objective(const Dataset& data, const LossFn& loss, const FrozenReference& frozen,
                             GeneratorKind generator, double alpha, std::size_t m,
                             std::size_t stage = 0, const TrainingHooks& hooks = {});

// Output-space gradients (one row per example) of the GULF2 inner objective
// in its two equivalent forms, exposed for the gradient-identity checks.
// Bregman form: D_{L_y}(f, f_t) + alpha grad L_y(f_t).f
Matrix bregman_form_output_grad(const Matrix& f, const Matrix& f_frozen, std::span<const int> labels,
                                const LossFn& loss, double alpha);
// Distillation form: (1 - alpha) L(f, p(f_t)) + alpha L_y(f)
Matrix distillation_form_output_grad(const Matrix& f, const Matrix& f_frozen,
                                     std::span<const int> labels, const LossFn& loss, double alpha);
// Matching objective values (means over rows); they differ by a constant in f.
double bregman_form_value(const Matrix& f, const Matrix& f_frozen, std::span<const int> labels,
                          const LossFn& loss, double alpha);
double distillation_form_value(const Matrix& f, const Matrix& f_frozen, std::span<const int> labels,
                               const LossFn& loss, double alpha);
// General guided objective grad_f D_h(f, f*_m) with f*_m from m exact mirror
// steps of size gamma under h = L_y.
Matrix exact_guide_output_grad(const Matrix& f, const Matrix& f_frozen, std::span<const int> labels,
                               const LossFn& loss, double gamma, std::size_t m);

// Parameter gradient of the mean of an output-space objective over a batch.
Vector parameter_grad(const MlpModel& model, const Matrix& x, const Matrix& output_grad);

MlpModel train_regular(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss,
                       const SgdConfig& cfg, const TrainingHooks& hooks = {});

std::vector<MlpModel> base_loop(const Dataset& data, const MlpModel& theta0, const LossFn& loss,
                                const SgdConfig& cfg, std::size_t stages,
                                const TrainingHooks& hooks = {});

MlpModel train_base_lambda_alpha(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss,
                                 const SgdConfig& cfg, double alpha, const TrainingHooks& hooks = {});

MlpModel train_label_smoothing(const Dataset& data, const MlpArchitecture& arch, const SgdConfig& cfg,
                               double epsilon, const TrainingHooks& hooks = {});

MlpModel gulf_stage(const MlpModel& theta_t, const Dataset& data, const LossFn& loss,
                    GeneratorKind generator, double alpha, std::size_t m, const SgdConfig& sgd,
                    std::size_t stage = 0, const TrainingHooks& hooks = {});

// Starting point for the configured init strategy.
MlpModel gulf_initial_model(const MlpArchitecture& arch, const GulfConfig& gulf,
                            const std::optional<MlpModel>& base);

// Returns theta_1 .. theta_T.
std::vector<MlpModel> gulf_train(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss,
                                 const GulfConfig& gulf, const std::optional<MlpModel>& base,
                                 const TrainingHooks& hooks = {});

struct GradIdentityReport {
  double alpha = 0.0;
  double max_abs_deviation = 0.0;
  double threshold = 1e-8;
  bool passed = false;
};

// Compares the parameter gradients of the Bregman and distillation forms on
// one batch. Throws IdentityViolation above the threshold.
GradIdentityReport prop22_grad_identity_check(const MlpModel& theta, const MlpModel& theta_t,
                                              const Matrix& x, std::span<const int> labels,
                                              const LossFn& loss, double alpha,
                                              double threshold = 1e-8);

// RNG domains split off a run seed.
inline constexpr std::uint64_t kInitStreamDomain = 1;
inline constexpr std::uint64_t kShuffleStreamDomain = 2;

}  // namespace gulf
