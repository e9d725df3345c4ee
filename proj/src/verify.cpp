#include "gulf/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gulf/bregman.hpp"
#include "gulf/diagnostics.hpp"
#include "gulf/errors.hpp"
#include "gulf/funcspace.hpp"
#include "gulf/trainers.hpp"

namespace gulf {

namespace {

std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

double json_safe(double v) { return std::isfinite(v) ? v : 1e308; }

VerifyCheck make_check(std::string name, double deviation, double threshold, std::string detail = {}) {
  VerifyCheck c;
  c.name = std::move(name);
  c.max_deviation = deviation;
  c.threshold = threshold;
  c.passed = std::isfinite(deviation) && deviation < threshold;
  c.detail = std::move(detail);
  return c;
}

VerifyCheck failed_check(std::string name, double threshold, const std::exception& e) {
  VerifyCheck c;
  c.name = std::move(name);
  c.max_deviation = kInf;
  c.threshold = threshold;
  c.passed = false;
  c.detail = e.what();
  return c;
}

Matrix random_matrix(RngStream& rng, std::size_t rows, std::size_t cols, double std_dev) {
  return Matrix(rows, cols, rng_normal(rng, rows * cols, 0.0, std_dev));
}

std::vector<int> random_labels(RngStream& rng, std::size_t n, std::size_t k) {
  std::vector<int> labels(n);
  for (int& y : labels) y = static_cast<int>(rng.next_below(k));
  return labels;
}

Vector unit_direction(RngStream& rng, std::size_t n) {
  Vector d = rng_normal(rng, n, 0.0, 1.0);
  const double norm = std::sqrt(norm_sq(d));
  for (double& v : d) v /= norm;
  return d;
}

double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

std::string arch_name(const MlpArchitecture& a) {
  std::string s = std::to_string(a.input_dim);
  for (std::size_t h : a.hidden_dims) s += "-" + std::to_string(h);
  s += "-" + std::to_string(a.output_dim);
  return s + " " + std::string(to_string(a.activation));
}

template <typename Fn>
VerifyReport timed(std::string suite, Fn&& body) {
  const auto start = std::chrono::steady_clock::now();
  VerifyReport report;
  report.suite = std::move(suite);
  body(report);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

bool VerifyReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.passed; });
}

nlohmann::json VerifyReport::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& c : checks) {
    items.push_back({{"name", c.name},
                     {"max_deviation", json_safe(c.max_deviation)},
                     {"threshold", c.threshold},
                     {"passed", c.passed},
                     {"detail", c.detail}});
  }
  return {{"suite", suite}, {"passed", passed()}, {"seconds", seconds}, {"checks", items}};
}

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"gradients", "prop21", "prop22", "theorem21", "bregman"};
  return names;
}

VerifyReport run_verify(std::string_view suite, std::uint64_t seed) {
  if (suite == "gradients") return verify_gradients(seed);
  if (suite == "prop21") return verify_prop21(seed);
  if (suite == "prop22") return verify_prop22(seed);
  if (suite == "theorem21") return verify_theorem21(seed);
  if (suite == "bregman") return verify_bregman(seed);
  throw ConfigError("unknown verify suite '" + std::string(suite) + "'");
}

std::vector<MlpArchitecture> gradient_test_architectures(std::size_t input_dim, std::size_t output_dim) {
  std::vector<MlpArchitecture> out;
  const std::vector<std::vector<std::size_t>> depths{{}, {6}, {5, 4}};
  for (const auto& hidden : depths) {
    for (Activation act : {Activation::kRelu, Activation::kTanh}) {
      out.push_back({input_dim, hidden, output_dim, act});
    }
  }
  return out;
}

double min_relu_margin(const MlpModel& model, const Matrix& x) {
  const auto& arch = model.architecture();
  if (arch.activation != Activation::kRelu || arch.hidden_dims.empty()) return kInf;
  const ForwardTape tape = forward_tape(model, x);
  double margin = kInf;
  for (std::size_t l = 0; l + 1 < arch.num_layers(); ++l) {
    for (double z : tape.pre[l].data()) margin = std::min(margin, std::abs(z));
  }
  return margin;
}

double directional_gradient_error(const MlpModel& model, const Dataset& data, const LossFn& loss,
                                  std::span<const double> direction, double eps) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Vector g = regular_objective(data, loss)(model, rows);
  const double analytic = dot(g, direction);
  auto along = [&](std::span<const double> t) {
    Vector theta = model.theta();
    axpy(t[0], direction, theta);
    return evaluate(MlpModel(model.architecture(), std::move(theta)), data, loss).mean_loss;
  };
  const double numeric = finite_diff_grad(along, Vector{0.0}, eps)[0];
  return relative_error(analytic, numeric);
}

VerifyReport verify_gradients(std::uint64_t seed, std::size_t directions) {
  return timed("gradients", [&](VerifyReport& report) {
    RngStream root = RngStream(seed).child(11);
    const std::size_t n = 12, d = 4, k = 3;
    struct Case {
      LossFn loss;
      std::size_t outputs;
    };
    const std::vector<Case> cases{{LossFn::cross_entropy(k), k}, {LossFn::squared(k), k}, {LossFn::squared_hinge(), 1}};
    std::uint64_t case_index = 0;
    for (const Case& c : cases) {
      for (const MlpArchitecture& arch : gradient_test_architectures(d, c.outputs)) {
        const std::string name = "backprop " + std::string(to_string(c.loss.kind())) + " " + arch_name(arch);
        try {
          RngStream rng = root.child(case_index++);
          Dataset data{random_matrix(rng, n, d, 1.0), random_labels(rng, n, c.loss.num_classes()),
                       c.loss.num_classes(), {}};
          // Resample until no relu unit sits within 1e-3 of its kink.
          std::optional<MlpModel> model;
          for (std::uint64_t attempt = 0; attempt < 200 && !model; ++attempt) {
            MlpModel candidate = init_random(arch, rng.child(attempt));
            Vector jitter = rng_normal(rng, arch.param_count(), 0.0, 0.1);
            candidate.add_to_theta(jitter);
            if (min_relu_margin(candidate, data.features) >= 1e-3) model = std::move(candidate);
          }
          if (!model) throw InvalidInput("could not place parameters away from relu kinks");
          double worst = 0.0;
          for (std::size_t j = 0; j < directions; ++j) {
            const Vector dir = unit_direction(rng, arch.param_count());
            worst = std::max(worst, directional_gradient_error(*model, data, c.loss, dir));
          }
          report.checks.push_back(make_check(name, worst, 1e-6, std::to_string(directions) + " directions"));
        } catch (const Error& e) {
          report.checks.push_back(failed_check(name, 1e-6, e));
        }
      }
    }

    // Output-space gradients of the losses and generators.
    RngStream rng = root.child(1000);
    double loss_worst = 0.0, gen_worst = 0.0;
    for (const Case& c : cases) {
      for (int trial = 0; trial < 20; ++trial) {
        const Vector u = rng_normal(rng, c.outputs, 0.0, 2.0);
        const int y = static_cast<int>(rng.next_below(c.loss.num_classes()));
        const Vector fd = finite_diff_grad([&](std::span<const double> v) { return c.loss.value(v, y); }, u);
        const Vector an = c.loss.grad(u, y);
        for (std::size_t i = 0; i < u.size(); ++i) loss_worst = std::max(loss_worst, relative_error(an[i], fd[i]));
        const auto h = BregmanGenerator::loss_as_generator(c.loss, y);
        const Vector v = rng_normal(rng, c.outputs, 0.0, 2.0);
        const Vector dfd = finite_diff_grad([&](std::span<const double> w) { return bregman(h, w, v); }, u);
        Vector dan = h.grad(u);
        const Vector hv = h.grad(v);
        for (std::size_t i = 0; i < u.size(); ++i) gen_worst = std::max(gen_worst, relative_error(dan[i] - hv[i], dfd[i]));
      }
    }
    report.checks.push_back(make_check("loss output gradients", loss_worst, 1e-6));
    report.checks.push_back(make_check("divergence gradients", gen_worst, 1e-6));
  });
}

VerifyReport verify_prop21(std::uint64_t seed) {
  return timed("prop21", [&](VerifyReport& report) {
    RngStream root = RngStream(seed).child(21);
    const std::size_t rows = 50, k = 4;
    const LossFn loss = LossFn::cross_entropy(k);
    std::uint64_t index = 0;
    for (double gamma : {0.1, 0.3, 0.5}) {
      for (std::size_t m : {1u, 2u, 3u, 5u}) {
        const std::string name = "gamma=" + short_double(gamma) + " m=" + std::to_string(m);
        RngStream rng = root.child(index++);
        const TabularFunction f(random_matrix(rng, rows, k, 2.0), true);
        const std::vector<int> labels = random_labels(rng, rows, k);
        try {
          const Prop21Report r = prop21_functional_check(f, labels, loss, gamma, m);
          report.checks.push_back(make_check(name, std::max(r.max_gradient_deviation, r.max_target_deviation),
                                             r.threshold,
                                             "effective alpha " + short_double(r.effective_alpha)));
        } catch (const IdentityViolation& e) {
          VerifyCheck c = make_check(name, e.deviation(), 1e-8, e.what());
          c.passed = false;
          report.checks.push_back(c);
        } catch (const Error& e) {
          report.checks.push_back(failed_check(name, 1e-8, e));
        }
      }
    }
  });
}

VerifyReport verify_prop22(std::uint64_t seed, std::size_t tuples) {
  return timed("prop22", [&](VerifyReport& report) {
    RngStream root = RngStream(seed).child(22);
    const std::size_t d = 5, k = 3;
    const std::vector<MlpArchitecture> archs{
        {d, {}, k, Activation::kRelu}, {d, {8}, k, Activation::kRelu}, {d, {8}, k, Activation::kTanh},
        {d, {6, 5}, k, Activation::kTanh}};
    for (const LossFn& loss : {LossFn::cross_entropy(k), LossFn::squared(k)}) {
      const std::string name = "bregman vs distillation gradient, " + std::string(to_string(loss.kind()));
      const std::size_t count = loss.kind() == LossKind::kCrossEntropy ? tuples : std::max<std::size_t>(tuples / 5, 1);
      double worst = 0.0;
      try {
        for (std::size_t i = 0; i < count; ++i) {
          RngStream rng = root.child(i + (loss.kind() == LossKind::kCrossEntropy ? 0 : 100000));
          const MlpArchitecture& arch = archs[rng.next_below(archs.size())];
          const MlpModel theta = init_random(arch, rng.child(1));
          const MlpModel theta_t = init_random(arch, rng.child(2));
          const std::size_t batch = 1 + rng.next_below(32);
          const Matrix x = random_matrix(rng, batch, d, 1.0);
          const std::vector<int> labels = random_labels(rng, batch, k);
          const double alpha = 1.0 - rng.next_uniform();
          const GradIdentityReport r = prop22_grad_identity_check(theta, theta_t, x, labels, loss, alpha);
          worst = std::max(worst, r.max_abs_deviation);
        }
        report.checks.push_back(make_check(name, worst, 1e-8, std::to_string(count) + " tuples"));
      } catch (const IdentityViolation& e) {
        VerifyCheck c = make_check(name, e.deviation(), 1e-8, e.what());
        c.passed = false;
        report.checks.push_back(c);
      } catch (const Error& e) {
        report.checks.push_back(failed_check(name, 1e-8, e));
      }
    }
  });
}

double descent_step_size(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss, double lambda) {
  return 1.0 / estimate_smoothness(MlpModel::zeros(arch), data, loss, lambda);
}

VerifyReport verify_theorem21(std::uint64_t seed) {
  return timed("theorem21", [&](VerifyReport& report) {
    SyntheticSpec spec;
    spec.generator = SyntheticGenerator::kGaussianBlobs;
    spec.num_classes = 2;
    spec.examples_per_class = 100;
    spec.input_dim = 5;
    spec.class_separation = 1.0;
    spec.seed = seed;
    const Dataset data = gen_synthetic(spec).train;
    const LossFn loss = LossFn::cross_entropy(2);
    const MlpArchitecture arch{spec.input_dim, {}, 2, Activation::kRelu};
    const double lambda = 1e-3;
    const double eta = descent_step_size(data, arch, loss, lambda);
    for (double alpha : {0.3, 1.0}) {
      const std::string tag = "alpha=" + short_double(alpha);
      DescentCheckConfig cfg;
      cfg.eta = eta;
      cfg.alpha = alpha;
      cfg.stages = 20;
      cfg.inner_steps = 50;
      try {
        const DescentReport r = theorem21_descent_check(data, arch, loss, cfg, lambda, seed);
        report.checks.push_back(make_check("stage slack " + tag, std::max(0.0, -r.min_slack), cfg.slack_tolerance,
                                           "min slack " + short_double(r.min_slack) + ", eta " + short_double(eta)));
        VerifyCheck avg = make_check("averaged gradient bound " + tag,
                                     std::max(0.0, r.mean_grad_norm_sq - r.averaged_bound), kInf,
                                     "mean |grad|^2 " + short_double(r.mean_grad_norm_sq) + " <= bound " +
                                         short_double(r.averaged_bound));
        avg.threshold = 2.0 * cfg.slack_tolerance / (alpha * eta);
        avg.passed = r.averaged_bound_holds;
        report.checks.push_back(avg);
      } catch (const Error& e) {
        report.checks.push_back(failed_check("stage slack " + tag, cfg.slack_tolerance, e));
      }
    }
  });
}

VerifyReport verify_bregman(std::uint64_t seed) {
  return timed("bregman", [&](VerifyReport& report) {
    RngStream rng = RngStream(seed).child(31);
    const std::size_t k = 3;
    std::vector<std::pair<std::string, BregmanGenerator>> gens;
    gens.emplace_back("half-squared-norm", BregmanGenerator::half_squared_norm());
    for (int y = 0; y < static_cast<int>(k); ++y) {
      gens.emplace_back("cross-entropy y=" + std::to_string(y),
                        BregmanGenerator::loss_as_generator(LossFn::cross_entropy(k), y));
      gens.emplace_back("squared y=" + std::to_string(y), BregmanGenerator::loss_as_generator(LossFn::squared(k), y));
    }
    for (int y = 0; y < 2; ++y) {
      gens.emplace_back("squared-hinge y=" + std::to_string(y),
                        BregmanGenerator::loss_as_generator(LossFn::squared_hinge(), y));
    }
    auto dim_of = [&](const BregmanGenerator& h) {
      return h.loss() && h.loss()->kind() == LossKind::kSquaredHinge ? std::size_t{1} : k;
    };

    // D_h(u, u) on a grid.
    double diag = 0.0;
    const std::vector<double> grid{-20.0, -3.0, -0.5, 0.0, 0.25, 1.0, 4.0, 30.0};
    for (const auto& [name, h] : gens) {
      const std::size_t dim = dim_of(h);
      for (double a : grid) {
        for (double b : grid) {
          Vector u(dim);
          for (std::size_t i = 0; i < dim; ++i) u[i] = i % 2 ? b : a + static_cast<double>(i);
          diag = std::max(diag, std::abs(bregman(h, u, u)));
        }
      }
    }
    report.checks.push_back(make_check("D_h(u, u) = 0 on grid", diag, 1e-12));

    double negative = 0.0, half_sq = 0.0, curvature = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      for (const auto& [name, h] : gens) {
        const std::size_t dim = dim_of(h);
        const Vector u = rng_normal(rng, dim, 0.0, 3.0);
        const Vector v = rng_normal(rng, dim, 0.0, 3.0);
        const double dv = bregman(h, u, v);
        negative = std::max(negative, -dv);
        if (h.kind() == GeneratorKind::kHalfSquaredNorm) {
          Vector diff = u;
          axpy(-1.0, v, diff);
          half_sq = std::max(half_sq, std::abs(dv - 0.5 * norm_sq(diff)));
        }
        if (h.has_hessian()) {
          const Matrix hess = h.hessian(u);
          const Vector w = rng_normal(rng, dim, 0.0, 1.0);
          curvature = std::max(curvature, -dot(w, matvec(hess, w)));
        }
      }
    }
    report.checks.push_back(make_check("D_h(u, v) >= 0", std::max(0.0, negative), 1e-12));
    report.checks.push_back(make_check("half-squared-norm divergence", half_sq, 1e-12));
    report.checks.push_back(make_check("generator Hessians PSD", std::max(0.0, curvature), 1e-14));

    // Exact mirror steps against the closed forms.
    const LossFn ce = LossFn::cross_entropy(k);
    double l2_dev = 0.0, loss_gen_dev = 0.0;
    try {
      for (int trial = 0; trial < 50; ++trial) {
        const Vector f = rng_normal(rng, k, 0.0, 2.0);
        const int y = static_cast<int>(rng.next_below(k));
        const double alpha = 0.05 + 0.9 * rng.next_uniform();
        const Vector q = guide_step_mirror_exact(BregmanGenerator::half_squared_norm(), f, y, ce, alpha);
        l2_dev = std::max(l2_dev, max_abs_diff(q, guide_step_l2(f, y, ce, alpha, 1)));
        const Vector r = guide_step_mirror_exact(BregmanGenerator::loss_as_generator(ce, y), f, y, ce, alpha);
        loss_gen_dev = std::max(loss_gen_dev, max_abs_diff(stable_softmax(r), guide_step_loss_generator(f, y, ce, alpha, 1)));
      }
      report.checks.push_back(make_check("mirror step, half-squared-norm", l2_dev, 1e-8));
      report.checks.push_back(make_check("mirror step, loss-as-generator", loss_gen_dev, 1e-8));
    } catch (const Error& e) {
      report.checks.push_back(failed_check("mirror steps", 1e-8, e));
    }
  });
}

}  // namespace gulf
