#include "gulf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gulf/errors.hpp"

namespace gulf {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCrossEntropy: return "cross-entropy";
    case LossKind::kSquared: return "squared";
    case LossKind::kSquaredHinge: return "squared-hinge";
  }
  return "unknown";
}

LossKind loss_kind_from_string(std::string_view name) {
  if (name == "cross-entropy") return LossKind::kCrossEntropy;
  if (name == "squared") return LossKind::kSquared;
  if (name == "squared-hinge") return LossKind::kSquaredHinge;
  throw InvalidParameter("unknown loss kind '" + std::string(name) + "'");
}

LossFn::LossFn(LossKind kind, std::size_t num_classes) : kind_(kind), num_classes_(num_classes) {
  if (num_classes < 2) throw InvalidParameter("a loss needs at least 2 classes");
  if (kind == LossKind::kSquaredHinge && num_classes != 2) {
    throw InvalidParameter("squared hinge is binary");
  }
}

std::size_t LossFn::output_dim() const noexcept {
  return kind_ == LossKind::kSquaredHinge ? 1 : num_classes_;
}

void LossFn::check(std::span<const double> u, int label) const {
  if (u.size() != output_dim()) {
    throw InvalidDimension("loss expects " + std::to_string(output_dim()) + " outputs, got " +
                           std::to_string(u.size()));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
    throw InvalidLabel("label " + std::to_string(label) + " outside [0, " +
                       std::to_string(num_classes_) + ")");
  }
}

void LossFn::require_link(const char* op) const {
  if (!has_link()) {
    throw UnsupportedOperation(std::string(op) + " is not defined for squared hinge");
  }
}

Vector LossFn::target(int label) const {
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
    throw InvalidLabel("label " + std::to_string(label) + " out of range");
  }
  if (kind_ == LossKind::kSquaredHinge) return {label == 1 ? 1.0 : -1.0};
  Vector y(num_classes_, 0.0);
  y[static_cast<std::size_t>(label)] = 1.0;
  return y;
}

double LossFn::value(std::span<const double> u, int label) const {
  check(u, label);
  const auto y = static_cast<std::size_t>(label);
  switch (kind_) {
    case LossKind::kCrossEntropy:
      return log_sum_exp(u) - u[y];
    case LossKind::kSquared: {
      double s = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) {
        const double d = u[k] - (k == y ? 1.0 : 0.0);
        s += d * d;
      }
      return 0.5 * s;
    }
    case LossKind::kSquaredHinge: {
      const double sign = label == 1 ? 1.0 : -1.0;
      const double slack = std::max(0.0, 1.0 - sign * u[0]);
      return slack * slack;
    }
  }
  return 0.0;
}

Vector LossFn::grad(std::span<const double> u, int label) const {
  check(u, label);
  if (kind_ == LossKind::kSquaredHinge) {
    const double sign = label == 1 ? 1.0 : -1.0;
    return {-2.0 * sign * std::max(0.0, 1.0 - sign * u[0])};
  }
  Vector g = link(u);
  g[static_cast<std::size_t>(label)] -= 1.0;
  return g;
}

Matrix LossFn::hessian(std::span<const double> u, int label) const {
  check(u, label);
  switch (kind_) {
    case LossKind::kCrossEntropy: {
      const Vector p = stable_softmax(u);
      Matrix h(p.size(), p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < p.size(); ++j) h(i, j) = -p[i] * p[j];
        h(i, i) += p[i];
      }
      return h;
    }
    case LossKind::kSquared:
      return Matrix::identity(u.size());
    case LossKind::kSquaredHinge:
      break;
  }
  throw UnsupportedOperation("squared hinge has no Hessian at its kink; refused");
}

Vector LossFn::link(std::span<const double> u) const {
  require_link("link");
  if (u.size() != output_dim()) throw InvalidDimension("link: output width mismatch");
  if (kind_ == LossKind::kCrossEntropy) return stable_softmax(u);
  return Vector(u.begin(), u.end());
}

double LossFn::value_soft(std::span<const double> u, std::span<const double> target) const {
  require_link("soft-target loss");
  if (u.size() != output_dim() || target.size() != output_dim()) {
    throw InvalidDimension("soft-target loss: width mismatch");
  }
  if (kind_ == LossKind::kCrossEntropy) {
    const double lse = log_sum_exp(u);
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) s += target[k] * (lse - u[k]);
    return s;
  }
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s += (u[k] - target[k]) * (u[k] - target[k]);
  return 0.5 * s;
}

Vector LossFn::grad_soft(std::span<const double> u, std::span<const double> target) const {
  if (target.size() != output_dim()) throw InvalidDimension("soft-target loss: width mismatch");
  Vector g = link(u);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] -= target[k];
  return g;
}

int LossFn::predict(std::span<const double> u) const {
  if (u.size() != output_dim()) throw InvalidDimension("predict: output width mismatch");
  if (kind_ == LossKind::kSquaredHinge) return u[0] >= 0.0 ? 1 : 0;
  std::size_t best = 0;
  for (std::size_t k = 1; k < u.size(); ++k) {
    if (u[k] > u[best]) best = k;
  }
  return static_cast<int>(best);
}

Vector smoothed_target(std::size_t num_classes, int label, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw InvalidParameter("label smoothing epsilon must lie in [0, 1)");
  }
  if (num_classes < 2) throw InvalidParameter("label smoothing needs K >= 2");
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
    throw InvalidLabel("label out of range");
  }
  Vector t(num_classes, epsilon / static_cast<double>(num_classes - 1));
  t[static_cast<std::size_t>(label)] = 1.0 - epsilon;
  return t;
}

}  // namespace gulf
