#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "gulf/numerics.hpp"

namespace gulf {

enum class LossKind { kCrossEntropy, kSquared, kSquaredHinge };

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);

// A loss L(u, y) over model outputs u.
//
// Labels are class indices. Cross-entropy and squared loss treat y as the
// one-hot vector of its class over K outputs. Squared hinge is binary with a
// single output; class 0 is encoded as -1 and class 1 as +1.
//
// Cross-entropy and squared loss satisfy grad L_y(u) = p(u) - y with a link
// p that does not depend on y (softmax and identity respectively). For those
// two, the *_soft variants accept an arbitrary target vector in place of the
// one-hot label, which is what distillation and label smoothing need.
class LossFn {
 public:
  LossFn(LossKind kind, std::size_t num_classes);

  static LossFn cross_entropy(std::size_t num_classes) { return {LossKind::kCrossEntropy, num_classes}; }
  static LossFn squared(std::size_t num_classes) { return {LossKind::kSquared, num_classes}; }
  static LossFn squared_hinge() { return {LossKind::kSquaredHinge, 2}; }

  LossKind kind() const noexcept { return kind_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  // Width of u: K, or 1 for squared hinge.
  std::size_t output_dim() const noexcept;
  bool has_link() const noexcept { return kind_ != LossKind::kSquaredHinge; }

  double value(std::span<const double> u, int label) const;
  Vector grad(std::span<const double> u, int label) const;
  Matrix hessian(std::span<const double> u, int label) const;

  // p(u): softmax for cross-entropy, identity for squared.
  Vector link(std::span<const double> u) const;
  // One-hot row for cross-entropy/squared, (+-1) for squared hinge.
  Vector target(int label) const;

  double value_soft(std::span<const double> u, std::span<const double> target) const;
  Vector grad_soft(std::span<const double> u, std::span<const double> target) const;

  // Predicted class: argmax with ties toward the lowest index, or the sign
  // of the single output for squared hinge (sign(0) = +1, i.e. class 1).
  int predict(std::span<const double> u) const;

  bool operator==(const LossFn&) const = default;

 private:
  void check(std::span<const double> u, int label) const;
  void require_link(const char* op) const;

  LossKind kind_;
  std::size_t num_classes_;
};

// Label smoothing: 1 - epsilon on the true class, epsilon / (K - 1) elsewhere.
Vector smoothed_target(std::size_t num_classes, int label, double epsilon);

}  // namespace gulf
