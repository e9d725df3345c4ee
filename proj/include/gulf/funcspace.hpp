#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gulf/bregman.hpp"
#include "gulf/losses.hpp"
#include "gulf/numerics.hpp"

namespace gulf {

// A "model" that is nothing but a table of outputs, one row per example.
// Rows are kept zero-mean when the generator is cross-entropy based.
class TabularFunction {
 public:
  TabularFunction(Matrix values, bool zero_sum);

  const Matrix& values() const noexcept { return values_; }
  bool zero_sum() const noexcept { return zero_sum_; }
  std::size_t size() const noexcept { return values_.rows(); }

 private:
  Matrix values_;
  bool zero_sum_;
};

// Which generator to use per row; the loss-as-generator variant binds each
// row's own label.
struct GeneratorChoice {
  GeneratorKind kind = GeneratorKind::kHalfSquaredNorm;
  BregmanGenerator for_row(const LossFn& loss, int label) const;
  bool zero_sum(const LossFn& loss) const;
};

// m exact mirror steps applied independently to every row.
TabularFunction tabular_mirror_descent(const TabularFunction& f, std::span<const int> labels,
                                       GeneratorChoice generator, const LossFn& loss,
                                       double alpha, std::size_t m,
                                       const MirrorSolverOptions& options = {});

struct Prop21Report {
  double gamma = 0.0;
  std::size_t m = 0;
  double effective_alpha = 0.0;  // 1 - (1 - gamma)^m
  // max |grad L_y(f*_m) - (1-gamma)^m grad L_y(f)| over all rows and outputs
  double max_gradient_deviation = 0.0;
  // max |p(f*_m) - (y + (1-gamma)^m (p(f) - y))|
  double max_target_deviation = 0.0;
  std::size_t worst_row = 0;
  double threshold = 1e-8;
  bool passed = false;
};

// Runs m exact mirror steps with h = L_y (cross-entropy) at step gamma and
// checks the contraction identity of the loss gradient against the closed
// form. Throws IdentityViolation when the deviation exceeds the threshold.
Prop21Report prop21_functional_check(const TabularFunction& f, std::span<const int> labels,
                                     const LossFn& loss, double gamma, std::size_t m,
                                     double threshold = 1e-8);

}  // namespace gulf
