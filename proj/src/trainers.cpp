#include "gulf/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gulf/errors.hpp"
#include "gulf/funcspace.hpp"

namespace gulf {

void SgdConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidParameter("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidParameter("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidParameter("weight decay must be >= 0");
  if (batch_size < 1) throw InvalidParameter("batch size must be >= 1");
  if (schedule.empty()) throw InvalidParameter("learning-rate schedule is empty");
  double previous = schedule.front().lr_multiplier;
  for (const auto& seg : schedule) {
    if (!(seg.lr_multiplier > 0.0)) throw InvalidParameter("lr multipliers must be positive");
    if (seg.lr_multiplier > previous) throw InvalidParameter("lr multipliers must be non-increasing");
    previous = seg.lr_multiplier;
  }
}

std::size_t SgdConfig::total_epochs() const {
  std::size_t n = 0;
  for (const auto& seg : schedule) n += seg.epochs;
  return n;
}

std::string_view to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::kRandom: return "ini:random";
    case InitStrategy::kBase: return "ini:base";
    case InitStrategy::kBaseShrunk: return "ini:base/V";
  }
  return "unknown";
}

InitStrategy init_strategy_from_string(std::string_view name) {
  if (name == "ini:random") return InitStrategy::kRandom;
  if (name == "ini:base") return InitStrategy::kBase;
  if (name == "ini:base/V") return InitStrategy::kBaseShrunk;
  throw InvalidParameter("unknown init strategy '" + std::string(name) + "'");
}

std::string_view to_string(GeneratorKind g) {
  return g == GeneratorKind::kHalfSquaredNorm ? "half-squared-norm" : "loss-as-generator";
}

GeneratorKind generator_kind_from_string(std::string_view name) {
  if (name == "half-squared-norm") return GeneratorKind::kHalfSquaredNorm;
  if (name == "loss-as-generator") return GeneratorKind::kLossAsGenerator;
  throw InvalidParameter("unknown generator '" + std::string(name) + "'");
}

void GulfConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("GULF alpha must lie in (0, 1]");
  if (m < 1) throw InvalidParameter("GULF m must be >= 1");
  if (stages < 1) throw InvalidParameter("GULF needs at least one stage");
  if (init == InitStrategy::kBaseShrunk && !(shrink_v > 0.0)) {
    throw InvalidParameter("shrink factor V must be positive");
  }
  sgd.validate();
}

MlpModel sgd_run(MlpModel model, std::size_t dataset_size, const BatchGradient& objective,
                 const SgdConfig& cfg, std::size_t stage, const TrainingHooks& hooks) {
  cfg.validate();
  if (dataset_size == 0) throw InvalidInput("cannot train on an empty dataset");
  const RngStream shuffle_root = RngStream(cfg.seed).child(kShuffleStreamDomain).child(stage);
  Vector velocity(model.theta().size(), 0.0);
  std::size_t step = 0;
  std::size_t epoch = 0;
  for (const auto& seg : cfg.schedule) {
    const double lr = cfg.lr * seg.lr_multiplier;
    for (std::size_t e = 0; e < seg.epochs; ++e, ++epoch) {
      RngStream order_stream = shuffle_root.child(epoch);
      const auto order = rng_permutation(order_stream, dataset_size);
      for (std::size_t start = 0; start < dataset_size; start += cfg.batch_size, ++step) {
        const std::size_t end = std::min(dataset_size, start + cfg.batch_size);
        const std::span<const std::size_t> batch(order.data() + start, end - start);
        Vector g = objective(model, batch);
        if (g.size() != velocity.size()) throw InvalidDimension("objective gradient has the wrong length");
        if (cfg.weight_decay != 0.0) axpy(cfg.weight_decay, model.theta(), g);
        if (!all_finite(g)) {
          throw DivergenceError("non-finite gradient at SGD step " + std::to_string(step), step);
        }
        if (hooks.on_step) hooks.on_step(stage, step, g);
        for (std::size_t i = 0; i < velocity.size(); ++i) {
          velocity[i] = cfg.momentum * velocity[i] - lr * g[i];
        }
        model.add_to_theta(velocity);
      }
    }
  }
  return model;
}

Vector parameter_grad(const MlpModel& model, const Matrix& x, const Matrix& output_grad) {
  Matrix scaled = output_grad;
  const double n = static_cast<double>(output_grad.rows());
  for (double& v : scaled.data()) v /= n;
  return backward(model, x, scaled);
}

namespace {

std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (std::size_t r : batch) out.push_back(data.labels[r]);
  return out;
}

template <typename RowGrad>
Vector batch_gradient(const MlpModel& model, const Dataset& data, std::span<const std::size_t> batch,
                      RowGrad&& row_grad) {
  const Matrix x = data.features.gather_rows(batch);
  const ForwardTape tape = forward_tape(model, x);
  const Matrix& f = tape.logits();
  Matrix grad_out(f.rows(), f.cols());
  const double n = static_cast<double>(batch.size());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const Vector g = row_grad(i, f.row(i), data.labels[batch[i]]);
    for (std::size_t k = 0; k < g.size(); ++k) grad_out(i, k) = g[k] / n;
  }
  return backward(model, tape, grad_out);
}

Vector distillation_target(const LossFn& loss, std::span<const double> frozen_logits, int label,
                           double alpha) {
  const Vector p = loss.link(frozen_logits);
  const Vector y = loss.target(label);
  Vector t(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) t[k] = (1.0 - alpha) * p[k] + alpha * y[k];
  return t;
}

}  // namespace

BatchGradient regular_objective(const Dataset& data, const LossFn& loss) {
  return [&data, loss](const MlpModel& model, std::span<const std::size_t> batch) {
    return batch_gradient(model, data, batch, [&](std::size_t, std::span<const double> f, int y) {
      return loss.grad(f, y);
    });
  };
}

BatchGradient soft_target_objective(const Dataset& data, const LossFn& loss,
                                    std::function<Vector(int label)> target) {
  return [&data, loss, target = std::move(target)](const MlpModel& model,
                                                    std::span<const std::size_t> batch) {
    return batch_gradient(model, data, batch, [&](std::size_t, std::span<const double> f, int y) {
      return loss.grad_soft(f, target(y));
    });
  };
}

BatchGradient gulf_objective(const Dataset& data, const LossFn& loss, const FrozenReference& frozen,
                             GeneratorKind generator, double alpha, std::size_t m, std::size_t stage,
                             const TrainingHooks& hooks) {
  return [&data, loss, &frozen, generator, alpha, m, stage, &hooks](
             const MlpModel& model, std::span<const std::size_t> batch) {
    const Matrix f_frozen = forward(frozen.model, data.features.gather_rows(batch));
    const std::vector<int> labels = gather_labels(data, batch);

    if (generator == GeneratorKind::kHalfSquaredNorm) {
      const GuideTarget guide = guide_targets_l2(f_frozen, labels, loss, alpha, m);
      if (hooks.on_guide) hooks.on_guide(stage, guide);
      return batch_gradient(model, data, batch, [&](std::size_t i, std::span<const double> f, int) {
        Vector g(f.begin(), f.end());
        const auto target = guide.values.row(i);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] -= target[k];
        return g;
      });
    }

    if (loss.kind() == LossKind::kCrossEntropy) {
      GuideTarget guide{GuideTarget::Representation::kProbability, Matrix(f_frozen.rows(), f_frozen.cols())};
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const Vector t = distillation_target(loss, f_frozen.row(i), labels[i], alpha);
        std::copy(t.begin(), t.end(), guide.values.row(i).begin());
      }
      if (hooks.on_guide) hooks.on_guide(stage, guide);
      return batch_gradient(model, data, batch, [&](std::size_t i, std::span<const double> f, int) {
        return loss.grad_soft(f, guide.values.row(i));
      });
    }

    // Bregman form for losses other than cross-entropy.
    return batch_gradient(model, data, batch, [&](std::size_t i, std::span<const double> f, int y) {
      Vector g = loss.grad(f, y);
      axpy(-(1.0 - alpha), loss.grad(f_frozen.row(i), y), g);
      return g;
    });
  };
}

Matrix bregman_form_output_grad(const Matrix& f, const Matrix& f_frozen, std::span<const int> labels,
                                const LossFn& loss, double alpha) {
  if (f.rows() != f_frozen.rows() || f.cols() != f_frozen.cols() || labels.size() != f.rows()) {
    throw InvalidDimension("output matrices and labels must align");
  }
  Matrix out(f.rows(), f.cols());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const auto h = BregmanGenerator::loss_as_generator(loss, labels[i]);
    // grad_u D_h(u, v) = grad h(u) - grad h(v)
    Vector g = h.grad(f.row(i));
    axpy(-1.0, h.grad(f_frozen.row(i)), g);
    axpy(alpha, loss.grad(f_frozen.row(i), labels[i]), g);
    std::copy(g.begin(), g.end(), out.row(i).begin());
  }
  return out;
}

Matrix distillation_form_output_grad(const Matrix& f, const Matrix& f_frozen,
                                     std::span<const int> labels, const LossFn& loss, double alpha) {
  if (f.rows() != f_frozen.rows() || f.cols() != f_frozen.cols() || labels.size() != f.rows()) {
    throw InvalidDimension("output matrices and labels must align");
  }
  Matrix out(f.rows(), f.cols());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const Vector teacher = loss.link(f_frozen.row(i));
    const Vector soft = loss.grad_soft(f.row(i), teacher);
    const Vector hard = loss.grad(f.row(i), labels[i]);
    for (std::size_t k = 0; k < soft.size(); ++k) out(i, k) = (1.0 - alpha) * soft[k] + alpha * hard[k];
  }
  return out;
}

double bregman_form_value(const Matrix& f, const Matrix& f_frozen, std::span<const int> labels,
                          const LossFn& loss, double alpha) {
  double total = 0.0;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const auto h = BregmanGenerator::loss_as_generator(loss, labels[i]);
    total += bregman(h, f.row(i), f_frozen.row(i)) +
             alpha * dot(loss.grad(f_frozen.row(i), labels[i]), f.row(i));
  }
  return total / static_cast<double>(f.rows());
}

double distillation_form_value(const Matrix& f, const Matrix& f_frozen, std::span<const int> labels,
                               const LossFn& loss, double alpha) {
  double total = 0.0;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const Vector teacher = loss.link(f_frozen.row(i));
    total += (1.0 - alpha) * loss.value_soft(f.row(i), teacher) + alpha * loss.value(f.row(i), labels[i]);
  }
  return total / static_cast<double>(f.rows());
}

Matrix exact_guide_output_grad(const Matrix& f, const Matrix& f_frozen, std::span<const int> labels,
                               const LossFn& loss, double gamma, std::size_t m) {
  const GeneratorChoice choice{GeneratorKind::kLossAsGenerator};
  const TabularFunction start(f_frozen, choice.zero_sum(loss));
  const TabularFunction guide = tabular_mirror_descent(start, labels, choice, loss, gamma, m);
  Matrix out(f.rows(), f.cols());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const auto h = BregmanGenerator::loss_as_generator(loss, labels[i]);
    Vector g = h.grad(f.row(i));
    axpy(-1.0, h.grad(guide.values().row(i)), g);
    std::copy(g.begin(), g.end(), out.row(i).begin());
  }
  return out;
}

MlpModel train_regular(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss,
                       const SgdConfig& cfg, const TrainingHooks& hooks) {
  data.validate();
  MlpModel start = init_random(arch, RngStream(cfg.seed).child(kInitStreamDomain));
  if (hooks.on_stage_start) hooks.on_stage_start(0, start);
  return sgd_run(std::move(start), data.size(), regular_objective(data, loss), cfg, 0, hooks);
}

std::vector<MlpModel> base_loop(const Dataset& data, const MlpModel& theta0, const LossFn& loss,
                                const SgdConfig& cfg, std::size_t stages, const TrainingHooks& hooks) {
  if (stages < 1) throw InvalidParameter("base-loop needs at least one round");
  data.validate();
  std::vector<MlpModel> out;
  MlpModel theta = theta0;
  for (std::size_t t = 0; t < stages; ++t) {
    if (hooks.on_stage_start) hooks.on_stage_start(t, theta);
    theta = sgd_run(theta, data.size(), regular_objective(data, loss), cfg, t, hooks);
    out.push_back(theta);
  }
  return out;
}

MlpModel train_base_lambda_alpha(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss,
                                 const SgdConfig& cfg, double alpha, const TrainingHooks& hooks) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("alpha must lie in (0, 1]");
  SgdConfig inflated = cfg;
  inflated.weight_decay = cfg.weight_decay / alpha;
  return train_regular(data, arch, loss, inflated, hooks);
}

MlpModel train_label_smoothing(const Dataset& data, const MlpArchitecture& arch, const SgdConfig& cfg,
                               double epsilon, const TrainingHooks& hooks) {
  data.validate();
  (void)smoothed_target(data.num_classes, 0, epsilon);  // validates epsilon
  const LossFn loss = LossFn::cross_entropy(data.num_classes);
  const std::size_t k = data.num_classes;
  MlpModel start = init_random(arch, RngStream(cfg.seed).child(kInitStreamDomain));
  if (hooks.on_stage_start) hooks.on_stage_start(0, start);
  auto objective = soft_target_objective(data, loss, [k, epsilon](int y) { return smoothed_target(k, y, epsilon); });
  return sgd_run(std::move(start), data.size(), objective, cfg, 0, hooks);
}

MlpModel gulf_stage(const MlpModel& theta_t, const Dataset& data, const LossFn& loss,
                    GeneratorKind generator, double alpha, std::size_t m, const SgdConfig& sgd,
                    std::size_t stage, const TrainingHooks& hooks) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidParameter("GULF alpha must lie in (0, 1]");
  if (!all_finite(theta_t.theta())) throw InvalidInput("theta_t is not finite");
  data.validate();
  const FrozenReference frozen{theta_t};
  if (hooks.on_stage_start) hooks.on_stage_start(stage, theta_t);
  return sgd_run(theta_t, data.size(), gulf_objective(data, loss, frozen, generator, alpha, m, stage, hooks),
                 sgd, stage, hooks);
}

MlpModel gulf_initial_model(const MlpArchitecture& arch, const GulfConfig& gulf,
                            const std::optional<MlpModel>& base) {
  switch (gulf.init) {
    case InitStrategy::kRandom:
      return init_random(arch, RngStream(gulf.sgd.seed).child(kInitStreamDomain));
    case InitStrategy::kBase:
    case InitStrategy::kBaseShrunk:
      if (!base) throw ConfigError(std::string(to_string(gulf.init)) + " requires a base model");
      if (!(base->architecture() == arch)) throw ConfigError("base model architecture differs from the run's");
      return gulf.init == InitStrategy::kBase ? *base : shrink_last_layer(*base, gulf.shrink_v);
  }
  throw ConfigError("unknown init strategy");
}

std::vector<MlpModel> gulf_train(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss,
                                 const GulfConfig& gulf, const std::optional<MlpModel>& base,
                                 const TrainingHooks& hooks) {
  gulf.validate();
  MlpModel theta = gulf_initial_model(arch, gulf, base);
  std::vector<MlpModel> out;
  out.reserve(gulf.stages);
  for (std::size_t t = 0; t < gulf.stages; ++t) {
    theta = gulf_stage(theta, data, loss, gulf.generator, gulf.alpha, gulf.m, gulf.sgd, t, hooks);
    out.push_back(theta);
  }
  return out;
}

GradIdentityReport prop22_grad_identity_check(const MlpModel& theta, const MlpModel& theta_t,
                                              const Matrix& x, std::span<const int> labels,
                                              const LossFn& loss, double alpha, double threshold) {
  if (!loss.has_link()) throw UnsupportedOperation("the distillation form needs grad L = p(f) - y");
  const Matrix f = forward(theta, x);
  const Matrix f_frozen = forward(theta_t, x);
  const Vector g_bregman = parameter_grad(theta, x, bregman_form_output_grad(f, f_frozen, labels, loss, alpha));
  const Vector g_distill =
      parameter_grad(theta, x, distillation_form_output_grad(f, f_frozen, labels, loss, alpha));
  GradIdentityReport report;
  report.alpha = alpha;
  report.threshold = threshold;
  report.max_abs_deviation = max_abs_diff(g_bregman, g_distill);
  report.passed = report.max_abs_deviation < threshold;
  if (!report.passed) {
    std::size_t worst = 0;
    for (std::size_t i = 0; i < g_bregman.size(); ++i) {
      if (std::abs(g_bregman[i] - g_distill[i]) == report.max_abs_deviation) worst = i;
    }
    throw IdentityViolation("Bregman and distillation gradients differ by " +
                                std::to_string(report.max_abs_deviation),
                            report.max_abs_deviation, worst);
  }
  return report;
}

}  // namespace gulf
