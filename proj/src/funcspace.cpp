#include "gulf/funcspace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gulf/errors.hpp"

namespace gulf {

TabularFunction::TabularFunction(Matrix values, bool zero_sum)
    : values_(std::move(values)), zero_sum_(zero_sum) {
  if (!all_finite(values_.data())) throw InvalidInput("tabular function has non-finite entries");
  if (zero_sum_) {
    for (std::size_t i = 0; i < values_.rows(); ++i) {
      const Vector row = canonicalize_logits(values_.row(i));
      std::copy(row.begin(), row.end(), values_.row(i).begin());
    }
  }
}

BregmanGenerator GeneratorChoice::for_row(const LossFn& loss, int label) const {
  if (kind == GeneratorKind::kHalfSquaredNorm) return BregmanGenerator::half_squared_norm();
  return BregmanGenerator::loss_as_generator(loss, label);
}

bool GeneratorChoice::zero_sum(const LossFn& loss) const {
  return kind == GeneratorKind::kLossAsGenerator && loss.kind() == LossKind::kCrossEntropy;
}

TabularFunction tabular_mirror_descent(const TabularFunction& f, std::span<const int> labels,
                                       GeneratorChoice generator, const LossFn& loss,
                                       double alpha, std::size_t m,
                                       const MirrorSolverOptions& options) {
  if (!(alpha > 0.0)) throw InvalidParameter("alpha must be > 0");
  if (m < 1) throw InvalidParameter("m must be >= 1; f*_0 is f itself");
  if (labels.size() != f.size()) throw InvalidDimension("one label per row required");
  Matrix out = f.values();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const BregmanGenerator h = generator.for_row(loss, labels[i]);
    Vector row(out.row(i).begin(), out.row(i).end());
    try {
      for (std::size_t step = 0; step < m; ++step) {
        row = guide_step_mirror_exact(h, row, labels[i], loss, alpha, options);
      }
    } catch (const ConvergenceFailure& e) {
      throw ConvergenceFailure("row " + std::to_string(i) + ": " + e.what(), e.residual());
    }
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return TabularFunction(std::move(out), generator.zero_sum(loss));
}

Prop21Report prop21_functional_check(const TabularFunction& f, std::span<const int> labels,
                                     const LossFn& loss, double gamma, std::size_t m,
                                     double threshold) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidParameter("gamma must lie in (0, 1)");
  if (loss.kind() != LossKind::kCrossEntropy) {
    throw UnsupportedOperation("the functional identity check runs with cross-entropy");
  }
  Prop21Report report;
  report.gamma = gamma;
  report.m = m;
  report.threshold = threshold;
  const double keep = std::pow(1.0 - gamma, static_cast<double>(m));
  report.effective_alpha = 1.0 - keep;

  const TabularFunction stepped = tabular_mirror_descent(
      f, labels, GeneratorChoice{GeneratorKind::kLossAsGenerator}, loss, gamma, m);
  double worst = -1.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Vector g0 = loss.grad(f.values().row(i), labels[i]);
    const Vector gm = loss.grad(stepped.values().row(i), labels[i]);
    const Vector closed = guide_step_loss_generator(f.values().row(i), labels[i], loss, gamma, m);
    const Vector pm = loss.link(stepped.values().row(i));
    double dev = 0.0;
    for (std::size_t k = 0; k < g0.size(); ++k) dev = std::max(dev, std::abs(gm[k] - keep * g0[k]));
    report.max_gradient_deviation = std::max(report.max_gradient_deviation, dev);
    report.max_target_deviation = std::max(report.max_target_deviation, max_abs_diff(pm, closed));
    const double row_worst = std::max(dev, max_abs_diff(pm, closed));
    if (row_worst > worst) {
      worst = row_worst;
      report.worst_row = i;
    }
  }
  report.passed = report.max_gradient_deviation < threshold && report.max_target_deviation < threshold;
  if (!report.passed) {
    throw IdentityViolation("functional gradient contraction violated: deviation " +
                                std::to_string(std::max(report.max_gradient_deviation,
                                                        report.max_target_deviation)) +
                                " at row " + std::to_string(report.worst_row),
                            std::max(report.max_gradient_deviation, report.max_target_deviation),
                            report.worst_row);
  }
  return report;
}

}  // namespace gulf
