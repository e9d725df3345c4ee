#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "gulf/losses.hpp"
#include "gulf/numerics.hpp"

namespace gulf {

enum class GeneratorKind { kHalfSquaredNorm, kLossAsGenerator };

// Convex function h defining the divergence D_h(u, v) = h(u) - h(v) - grad h(v).(u - v).
// The loss-as-generator variant is h = L_y for a fixed label y.
class BregmanGenerator {
 public:
  static BregmanGenerator half_squared_norm() { return BregmanGenerator(); }
  static BregmanGenerator loss_as_generator(const LossFn& loss, int label);

  GeneratorKind kind() const noexcept { return kind_; }
  const std::optional<LossFn>& loss() const noexcept { return loss_; }
  int label() const noexcept { return label_; }

  double value(std::span<const double> u) const;
  Vector grad(std::span<const double> u) const;
  Matrix hessian(std::span<const double> u) const;
  bool has_hessian() const noexcept;

  // Cross-entropy generators are flat along the all-ones direction, so the
  // function-space representatives for them live on the zero-sum subspace.
  bool zero_sum_canonical() const noexcept;

 private:
  BregmanGenerator() = default;

  GeneratorKind kind_ = GeneratorKind::kHalfSquaredNorm;
  std::optional<LossFn> loss_;
  int label_ = 0;
};

double bregman(const BregmanGenerator& h, std::span<const double> u, std::span<const double> v);

// Shifts logits to zero mean.
Vector canonicalize_logits(std::span<const double> u);

// Row-aligned guide targets for a batch. Logits for h = 1/2|.|^2; link-space
// values p(f*) for h = L_y (probabilities when L is cross-entropy).
struct GuideTarget {
  enum class Representation { kLogits, kProbability };
  Representation representation = Representation::kLogits;
  Matrix values;
};

struct MirrorSolverOptions {
  double gradient_tolerance = 1e-10;
  std::size_t max_iterations = 10000;
  double optimality_tolerance = 1e-8;
};

// m first-order functional gradient steps: f_{i+1} = f_i - alpha grad L_y(f_i).
Vector guide_step_l2(std::span<const double> f, int label, const LossFn& loss, double alpha,
                     std::size_t m);

// Closed form for h = L_y under grad L_y = p - y: p(f*_m) = y + (1-gamma)^m (p(f) - y).
Vector guide_step_loss_generator(std::span<const double> f, int label, const LossFn& loss,
                                 double gamma, std::size_t m);

// argmin_q [ D_h(q, f) + alpha grad L_y(f).q ] solved numerically.
Vector guide_step_mirror_exact(const BregmanGenerator& h, std::span<const double> f, int label,
                               const LossFn& loss, double alpha,
                               const MirrorSolverOptions& options = {});

// f - alpha H(h(f))^+ grad L_y(f), the pseudo-inverse taken on the zero-sum
// subspace for cross-entropy generators.
Vector relaxed_newton_step(const BregmanGenerator& h, std::span<const double> f, int label,
                           const LossFn& loss, double alpha);

// Batched forms, one row per example.
GuideTarget guide_targets_l2(const Matrix& f, std::span<const int> labels, const LossFn& loss,
                             double alpha, std::size_t m);
GuideTarget guide_targets_loss_generator(const Matrix& f, std::span<const int> labels,
                                         const LossFn& loss, double gamma, std::size_t m);

// Max |row sum - 1| and whether every entry lies in [0, 1].
struct ProbabilityCheck {
  double max_row_sum_error = 0.0;
  bool entries_in_unit_interval = true;
};
ProbabilityCheck check_probability_rows(const Matrix& rows);

}  // namespace gulf
