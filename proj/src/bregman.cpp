#include "gulf/bregman.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gulf/errors.hpp"

namespace gulf {

BregmanGenerator BregmanGenerator::loss_as_generator(const LossFn& loss, int label) {
  (void)loss.target(label);  // validates the label
  BregmanGenerator h;
  h.kind_ = GeneratorKind::kLossAsGenerator;
  h.loss_ = loss;
  h.label_ = label;
  return h;
}

double BregmanGenerator::value(std::span<const double> u) const {
  if (kind_ == GeneratorKind::kHalfSquaredNorm) return 0.5 * norm_sq(u);
  return loss_->value(u, label_);
}

Vector BregmanGenerator::grad(std::span<const double> u) const {
  if (kind_ == GeneratorKind::kHalfSquaredNorm) return Vector(u.begin(), u.end());
  return loss_->grad(u, label_);
}

Matrix BregmanGenerator::hessian(std::span<const double> u) const {
  if (kind_ == GeneratorKind::kHalfSquaredNorm) return Matrix::identity(u.size());
  return loss_->hessian(u, label_);
}

bool BregmanGenerator::has_hessian() const noexcept {
  return kind_ == GeneratorKind::kHalfSquaredNorm || loss_->kind() != LossKind::kSquaredHinge;
}

bool BregmanGenerator::zero_sum_canonical() const noexcept {
  return kind_ == GeneratorKind::kLossAsGenerator && loss_->kind() == LossKind::kCrossEntropy;
}

double bregman(const BregmanGenerator& h, std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw InvalidDimension("bregman: u and v differ in length");
  const Vector gv = h.grad(v);
  double linear = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) linear += gv[i] * (u[i] - v[i]);
  return h.value(u) - h.value(v) - linear;
}

Vector canonicalize_logits(std::span<const double> u) {
  double mean = 0.0;
  for (double x : u) mean += x;
  mean /= static_cast<double>(u.size());
  Vector out(u.begin(), u.end());
  for (double& x : out) x -= mean;
  return out;
}

namespace {

void project_zero_sum(std::span<double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double& x : v) x -= mean;
}

// Solves H d = r, with H augmented by the all-ones outer product on the
// zero-sum subspace so the system is nonsingular.
Vector solve_hessian(const BregmanGenerator& h, std::span<const double> at,
                     std::span<const double> rhs) {
  Matrix hess = h.hessian(at);
  Vector r(rhs.begin(), rhs.end());
  if (h.zero_sum_canonical()) {
    project_zero_sum(r);
    for (double& x : hess.data()) x += 1.0;
  }
  Vector d = cholesky_solve(hess, r);
  if (h.zero_sum_canonical()) project_zero_sum(d);
  return d;
}

}  // namespace

Vector guide_step_l2(std::span<const double> f, int label, const LossFn& loss, double alpha,
                     std::size_t m) {
  if (!(alpha >= 0.0)) throw InvalidParameter("guide step size must be >= 0");
  if (m < 1) throw InvalidParameter("guide needs m >= 1 steps");
  Vector cur(f.begin(), f.end());
  for (std::size_t i = 0; i < m; ++i) {
    const Vector g = loss.grad(cur, label);
    for (std::size_t k = 0; k < cur.size(); ++k) cur[k] -= alpha * g[k];
    if (!all_finite(cur)) {
      throw DivergenceError("guide_step_l2 diverged at step " + std::to_string(i + 1), i + 1);
    }
  }
  return cur;
}

Vector guide_step_loss_generator(std::span<const double> f, int label, const LossFn& loss,
                                 double gamma, std::size_t m) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidParameter("gamma must lie in (0, 1]");
  if (m < 1) throw InvalidParameter("guide needs m >= 1 steps");
  if (!loss.has_link()) {
    throw UnsupportedOperation("closed-form guide needs a loss with grad = p(f) - y");
  }
  const Vector p = loss.link(f);
  const Vector y = loss.target(label);
  const double keep = std::pow(1.0 - gamma, static_cast<double>(m));
  Vector out(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) out[k] = y[k] + keep * (p[k] - y[k]);
  return out;
}

Vector guide_step_mirror_exact(const BregmanGenerator& h, std::span<const double> f, int label,
                               const LossFn& loss, double alpha,
                               const MirrorSolverOptions& options) {
  if (!(alpha >= 0.0)) throw InvalidParameter("mirror step size must be >= 0");
  const bool zero_sum = h.zero_sum_canonical();
  const Vector start = zero_sum ? canonicalize_logits(f) : Vector(f.begin(), f.end());
  const Vector loss_grad = loss.grad(start, label);

  // Optimality: grad h(q) = grad h(f) - alpha grad L_y(f).
  Vector dual = h.grad(start);
  axpy(-alpha, loss_grad, dual);

  auto objective = [&](std::span<const double> q) { return h.value(q) - dot(dual, q); };
  auto residual = [&](std::span<const double> q) {
    Vector r = h.grad(q);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] -= dual[k];
    if (zero_sum) project_zero_sum(r);
    return r;
  };

  Vector q = start;
  double phi = objective(q);
  Vector r = residual(q);
  double rnorm = std::sqrt(norm_sq(r));
  std::size_t it = 0;
  for (; it < options.max_iterations && rnorm >= options.gradient_tolerance; ++it) {
    Vector d;
    if (h.has_hessian()) {
      try {
        d = solve_hessian(h, q, r);
        for (double& x : d) x = -x;
      } catch (const InvalidInput&) {
        d.clear();
      }
    }
    if (d.empty()) {
      d = r;
      for (double& x : d) x = -x;
    }
    const double slope = dot(r, d);
    bool accepted = false;
    double step = 1.0;
    for (int halvings = 0; halvings < 60; ++halvings, step *= 0.5) {
      Vector trial = q;
      axpy(step, d, trial);
      if (!all_finite(trial)) continue;
      const double trial_phi = objective(trial);
      if (!std::isfinite(trial_phi)) continue;
      const Vector trial_r = residual(trial);
      const double trial_rnorm = std::sqrt(norm_sq(trial_r));
      // Armijo, or (near the optimum, where phi is flat to rounding) a
      // reduction of the residual without a meaningful objective increase.
      const bool armijo = trial_phi <= phi + 1e-4 * step * slope;
      const bool flat = trial_rnorm < rnorm && trial_phi <= phi + 1e-13 * (1.0 + std::abs(phi));
      if (armijo || flat) {
        q = std::move(trial);
        phi = trial_phi;
        r = trial_r;
        rnorm = trial_rnorm;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (rnorm >= options.gradient_tolerance) {
    throw ConvergenceFailure("mirror step solver stopped after " + std::to_string(it) +
                                 " iterations with residual " + std::to_string(rnorm),
                             rnorm);
  }
  const Vector gq = h.grad(q);
  double worst = 0.0;
  for (std::size_t k = 0; k < gq.size(); ++k) worst = std::max(worst, std::abs(gq[k] - dual[k]));
  if (worst > options.optimality_tolerance) {
    throw ConvergenceFailure("mirror optimality condition violated by " + std::to_string(worst),
                             worst);
  }
  return q;
}

Vector relaxed_newton_step(const BregmanGenerator& h, std::span<const double> f, int label,
                           const LossFn& loss, double alpha) {
  const Vector start = h.zero_sum_canonical() ? canonicalize_logits(f) : Vector(f.begin(), f.end());
  const Vector g = loss.grad(start, label);
  const Vector d = solve_hessian(h, start, g);
  Vector out = start;
  axpy(-alpha, d, out);
  return out;
}

GuideTarget guide_targets_l2(const Matrix& f, std::span<const int> labels, const LossFn& loss,
                             double alpha, std::size_t m) {
  if (labels.size() != f.rows()) throw InvalidDimension("one label per row required");
  GuideTarget out{GuideTarget::Representation::kLogits, Matrix(f.rows(), f.cols())};
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const Vector row = guide_step_l2(f.row(i), labels[i], loss, alpha, m);
    std::copy(row.begin(), row.end(), out.values.row(i).begin());
  }
  return out;
}

GuideTarget guide_targets_loss_generator(const Matrix& f, std::span<const int> labels,
                                         const LossFn& loss, double gamma, std::size_t m) {
  if (labels.size() != f.rows()) throw InvalidDimension("one label per row required");
  const auto repr = loss.kind() == LossKind::kCrossEntropy
                        ? GuideTarget::Representation::kProbability
                        : GuideTarget::Representation::kLogits;
  GuideTarget out{repr, Matrix(f.rows(), f.cols())};
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const Vector row = guide_step_loss_generator(f.row(i), labels[i], loss, gamma, m);
    std::copy(row.begin(), row.end(), out.values.row(i).begin());
  }
  return out;
}

ProbabilityCheck check_probability_rows(const Matrix& rows) {
  ProbabilityCheck check;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double s = 0.0;
    for (double x : rows.row(i)) {
      s += x;
      if (!(x >= 0.0 && x <= 1.0)) check.entries_in_unit_interval = false;
    }
    check.max_row_sum_error = std::max(check.max_row_sum_error, std::abs(s - 1.0));
  }
  return check;
}

}  // namespace gulf
