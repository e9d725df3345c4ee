#include "gulf/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gulf/errors.hpp"

namespace gulf {

Evaluation evaluate(const MlpModel& model, const Dataset& data, const LossFn& loss) {
  if (data.size() == 0) throw InvalidInput("cannot evaluate on an empty dataset");
  const Matrix f = forward(model, data.features);
  double total = 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += loss.value(f.row(i), data.labels[i]);
    if (loss.predict(f.row(i)) != data.labels[i]) ++wrong;
  }
  const double n = static_cast<double>(data.size());
  return {total / n, static_cast<double>(wrong) / n};
}

double alpha_regularized_loss(const MlpModel& model, const Dataset& data, const LossFn& loss,
                              double lambda, double alpha) {
  if (!(alpha > 0.0)) throw InvalidParameter("alpha must be > 0");
  return evaluate(model, data, loss).mean_loss + 0.5 * lambda * param_norm_sq(model) / alpha;
}

Vector alpha_regularized_loss_grad(const MlpModel& model, const Dataset& data, const LossFn& loss,
                                   double lambda, double alpha) {
  if (!(alpha > 0.0)) throw InvalidParameter("alpha must be > 0");
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Vector g = regular_objective(data, loss)(model, all);
  axpy(lambda / alpha, model.theta(), g);
  return g;
}

void StageTrajectory::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (i > 0 && r.stage <= records[i - 1].stage) throw InvalidInput("trajectory stages must increase");
    for (double e : {r.train_error, r.test_error}) {
      if (!(e >= 0.0 && e <= 1.0)) throw InvalidInput("error fractions must lie in [0, 1]");
    }
    for (double v : {r.train_loss, r.test_loss, r.reg_alpha_loss, r.param_norm_sq}) {
      if (!std::isfinite(v)) throw InvalidInput("trajectory values must be finite");
    }
  }
}

StageTrajectory record_trajectory(std::span<const MlpModel> checkpoints, const Dataset& train,
                                  const Dataset& test, const LossFn& loss, double lambda, double alpha,
                                  std::size_t first_stage) {
  if (checkpoints.empty()) throw InvalidInput("no checkpoints to record");
  if (!(alpha > 0.0)) throw InvalidParameter("alpha must be > 0");
  StageTrajectory out;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const auto& model = checkpoints[i];
    const Evaluation tr = evaluate(model, train, loss);
    const Evaluation te = evaluate(model, test, loss);
    const double norm = param_norm_sq(model);
    out.records.push_back({first_stage + i, tr.mean_loss, te.mean_loss, tr.error_rate, te.error_rate,
                           tr.mean_loss + 0.5 * lambda * norm / alpha, norm});
  }
  out.validate();
  return out;
}

std::string trajectory_to_csv(const StageTrajectory& trajectory) {
  std::string out = kTrajectoryHeader;
  out += '\n';
  for (const auto& r : trajectory.records) {
    out += std::to_string(r.stage);
    for (double v : {r.train_loss, r.test_loss, r.train_error, r.test_error, r.reg_alpha_loss, r.param_norm_sq}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

StageTrajectory trajectory_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryHeader) {
    throw ParseError("trajectory CSV has an unexpected header", 0, 0);
  }
  StageTrajectory t;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw ParseError("trajectory row has the wrong width", row, cells.size());
    StageRecord r;
    try {
      r.stage = std::stoul(cells[0]);
      r.train_loss = std::stod(cells[1]);
      r.test_loss = std::stod(cells[2]);
      r.train_error = std::stod(cells[3]);
      r.test_error = std::stod(cells[4]);
      r.reg_alpha_loss = std::stod(cells[5]);
      r.param_norm_sq = std::stod(cells[6]);
    } catch (const std::exception&) {
      throw ParseError("non-numeric trajectory cell", row, 0);
    }
    t.records.push_back(r);
  }
  t.validate();
  return t;
}

void write_trajectory_csv(const StageTrajectory& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << trajectory_to_csv(trajectory);
}

Matrix ensemble_predict(std::span<const MlpModel> models, const Matrix& x) {
  if (models.empty()) throw InvalidInput("ensemble needs at least one model");
  const std::size_t k = models.front().architecture().output_dim;
  Matrix total(x.rows(), k, 0.0);
  for (const auto& model : models) {
    if (model.architecture().output_dim != k) throw InvalidInput("ensemble members differ in output width");
    const Matrix f = forward(model, x);
    for (std::size_t i = 0; i < f.rows(); ++i) {
      const Vector p = stable_softmax(f.row(i));
      for (std::size_t c = 0; c < k; ++c) total(i, c) += p[c];
    }
  }
  if (models.size() > 1) {
    const double n = static_cast<double>(models.size());
    for (double& v : total.data()) v /= n;
  }
  return total;
}

double ensemble_error(std::span<const MlpModel> models, const Dataset& data) {
  if (data.size() == 0) throw InvalidInput("cannot evaluate on an empty dataset");
  const Matrix p = ensemble_predict(models, data.features);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto row = p.row(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best != data.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

void DescentCheckConfig::validate() const {
  if (!(eta > 0.0)) throw InvalidParameter("eta must be > 0");
  if (!(beta > 0.0)) throw InvalidParameter("beta must be > 0");
  if (!(alpha > 0.0 && alpha <= beta)) throw InvalidParameter("alpha must lie in (0, beta]");
  if (stages < 1) throw InvalidParameter("descent check needs at least one stage");
  if (inner_steps < 1) throw InvalidParameter("descent check needs at least one inner step");
}

namespace {

std::vector<std::size_t> all_rows(const Dataset& data) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

// Q_t(theta) = mean[D_{L_y}(f_theta, f_t) + alpha grad L_y(f_t).f_theta] + R(theta)
struct StageObjective {
  const Dataset& data;
  const LossFn& loss;
  Matrix frozen_logits;
  double alpha;
  double lambda;

  double value(const MlpModel& model) const {
    const Matrix f = forward(model, data.features);
    return bregman_form_value(f, frozen_logits, data.labels, loss, alpha) +
           0.5 * lambda * param_norm_sq(model);
  }

  Vector grad(const MlpModel& model) const {
    const Matrix f = forward(model, data.features);
    Vector g = parameter_grad(model, data.features,
                              bregman_form_output_grad(f, frozen_logits, data.labels, loss, alpha));
    axpy(lambda, model.theta(), g);
    return g;
  }
};

MlpModel stepped(const MlpModel& model, double step, std::span<const double> direction) {
  Vector delta(direction.begin(), direction.end());
  for (double& v : delta) v *= -step;
  MlpModel out = model;
  out.add_to_theta(delta);
  return out;
}

}  // namespace

double estimate_smoothness(const MlpModel& model, const Dataset& data, const LossFn& loss, double lambda,
                           std::uint64_t seed) {
  const auto rows = all_rows(data);
  const BatchGradient objective = regular_objective(data, loss);
  auto grad_at = [&](std::span<const double> theta) {
    const MlpModel probe(model.architecture(), Vector(theta.begin(), theta.end()));
    Vector g = objective(probe, rows);
    axpy(lambda, theta, g);
    return g;
  };
  const double eps = 1e-5;
  auto hvp = [&](std::span<const double> v) {
    Vector up = model.theta(), down = model.theta();
    axpy(eps, v, up);
    axpy(-eps, v, down);
    Vector gu = grad_at(up);
    const Vector gd = grad_at(down);
    for (std::size_t i = 0; i < gu.size(); ++i) gu[i] = (gu[i] - gd[i]) / (2.0 * eps);
    return gu;
  };
  return power_iteration(hvp, model.theta().size(), RngStream(seed), 500, 1e-12);
}

DescentReport theorem21_descent_check(const MlpModel& theta0, const Dataset& data, const LossFn& loss,
                                      const DescentCheckConfig& cfg, double lambda) {
  cfg.validate();
  data.validate();
  DescentReport report;
  MlpModel theta = theta0;
  const double l0 = alpha_regularized_loss(theta0, data, loss, lambda, cfg.alpha);
  double grad_sum = 0.0;
  report.min_slack = INFINITY;
  for (std::size_t t = 0; t < cfg.stages; ++t) {
    const StageObjective q{data, loss, forward(theta, data.features), cfg.alpha, lambda};
    DescentStage rec;
    rec.stage = t;
    rec.reg_loss = alpha_regularized_loss(theta, data, loss, lambda, cfg.alpha);
    rec.grad_norm_sq = norm_sq(alpha_regularized_loss_grad(theta, data, loss, lambda, cfg.alpha));

    const double q_start = q.value(theta);
    MlpModel current = stepped(theta, cfg.eta, q.grad(theta));
    double q_current = q.value(current);
    if (q_current > q_start) {
      throw HypothesisViolation("Q_t increased at the first gradient step at stage " + std::to_string(t) +
                                "; reduce eta");
    }
    for (std::size_t k = 1; k < cfg.inner_steps; ++k) {
      const Vector g = q.grad(current);
      bool improved = false;
      for (double step = cfg.eta; step > cfg.eta * 1e-6; step *= 0.5) {
        MlpModel candidate = stepped(current, step, g);
        const double qc = q.value(candidate);
        if (qc <= q_current) {
          current = std::move(candidate);
          q_current = qc;
          improved = true;
          break;
        }
      }
      if (!improved) break;
    }
    theta = std::move(current);
    rec.next_reg_loss = alpha_regularized_loss(theta, data, loss, lambda, cfg.alpha);
    rec.slack = rec.reg_loss - 0.5 * cfg.alpha * cfg.eta * rec.grad_norm_sq - rec.next_reg_loss;
    report.min_slack = std::min(report.min_slack, rec.slack);
    grad_sum += rec.grad_norm_sq;
    report.stages.push_back(rec);
  }
  const double t_count = static_cast<double>(cfg.stages);
  const double l_final = report.stages.back().next_reg_loss;
  report.mean_grad_norm_sq = grad_sum / t_count;
  report.averaged_bound = 2.0 * (l0 - l_final) / (cfg.alpha * cfg.eta * t_count);
  // Summing the per-stage inequalities gives the bound; the tolerance admits
  // the same per-stage rounding slack.
  report.averaged_bound_holds =
      report.mean_grad_norm_sq <=
      report.averaged_bound + 2.0 * cfg.slack_tolerance / (cfg.alpha * cfg.eta);
  report.passed = report.min_slack >= -cfg.slack_tolerance && report.averaged_bound_holds;
  return report;
}

DescentReport theorem21_descent_check(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss,
                                      const DescentCheckConfig& cfg, double lambda, std::uint64_t seed) {
  return theorem21_descent_check(init_random(arch, RngStream(seed).child(kInitStreamDomain)), data, loss, cfg,
                                 lambda);
}

}  // namespace gulf
