#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gulf/diagnostics.hpp"
#include "gulf/errors.hpp"
#include "gulf/funcspace.hpp"
#include "gulf/trainers.hpp"
#include "test_support.hpp"

using namespace gulf;

namespace {

SgdConfig small_sgd(std::uint64_t seed = 0) {
  SgdConfig c;
  c.lr = 0.05;
  c.momentum = 0.9;
  c.weight_decay = 1e-3;
  c.batch_size = 16;
  c.schedule = {{4, 1.0}, {1, 0.1}};
  c.seed = seed;
  return c;
}

Dataset blobs(std::uint64_t seed, std::size_t per_class = 40, double sep = 3.0, std::size_t classes = 3) {
  SyntheticSpec s;
  s.num_classes = classes;
  s.examples_per_class = per_class;
  s.input_dim = 4;
  s.class_separation = sep;
  s.seed = seed;
  return gen_synthetic(s).train;
}

}  // namespace

TEST_CASE("sgd config validation") {
  SgdConfig c = small_sgd();
  CHECK_NOTHROW(c.validate());
  CHECK(c.total_epochs() == 5);
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = small_sgd();
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = small_sgd();
  c.schedule = {{1, 0.1}, {1, 1.0}};
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c.schedule = {};
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
}

TEST_CASE("sgd_run with a zero gradient leaves theta unchanged") {
  const MlpArchitecture a{3, {}, 2, Activation::kRelu};
  const MlpModel m = init_random(a, RngStream(1));
  SgdConfig c = small_sgd();
  c.weight_decay = 0.0;
  std::size_t steps = 0;
  TrainingHooks hooks;
  hooks.on_step = [&](std::size_t, std::size_t, std::span<const double>) { ++steps; };
  const MlpModel out = sgd_run(
      m, 50, [&](const MlpModel&, std::span<const std::size_t>) { return Vector(a.param_count(), 0.0); }, c, 0,
      hooks);
  CHECK(out == m);
  // 50 rows in batches of 16 is 4 steps per epoch.
  CHECK(steps == 4 * 5);
}

TEST_CASE("sgd_run converges on a one dimensional quadratic") {
  const MlpArchitecture a{1, {}, 1, Activation::kRelu};
  const double target_w = 2.5, target_b = -1.0;
  SgdConfig c;
  c.lr = 0.1;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  c.batch_size = 1;
  c.schedule = {{500, 1.0}};
  const MlpModel out = sgd_run(
      MlpModel::zeros(a), 1,
      [&](const MlpModel& m, std::span<const std::size_t>) {
        return Vector{m.theta()[0] - target_w, m.theta()[1] - target_b};
      },
      c);
  CHECK(std::abs(out.theta()[0] - target_w) < 1e-6);
  CHECK(std::abs(out.theta()[1] - target_b) < 1e-6);

  c.momentum = 0.9;
  const MlpModel heavy = sgd_run(
      MlpModel::zeros(a), 1,
      [&](const MlpModel& m, std::span<const std::size_t>) {
        return Vector{m.theta()[0] - target_w, m.theta()[1] - target_b};
      },
      c);
  CHECK(std::abs(heavy.theta()[0] - target_w) < 1e-6);
}

TEST_CASE("sgd_run reports divergence with the step") {
  const MlpArchitecture a{1, {}, 1, Activation::kRelu};
  SgdConfig c = small_sgd();
  c.batch_size = 1;
  try {
    sgd_run(
        MlpModel::zeros(a), 3,
        [&](const MlpModel& m, std::span<const std::size_t>) {
          return m.theta()[0] > 0.5 ? Vector{NAN, 0.0} : Vector{-1.0, 0.0};
        },
        c);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() > 0);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset d = blobs(3);
  const MlpArchitecture a{4, {8}, 3, Activation::kRelu};
  const LossFn ce = LossFn::cross_entropy(3);
  const MlpModel x = train_regular(d, a, ce, small_sgd(5));
  CHECK(x == train_regular(d, a, ce, small_sgd(5)));
  CHECK_FALSE(x == train_regular(d, a, ce, small_sgd(6)));
}

TEST_CASE("regular training separates separable blobs") {
  const Dataset d = blobs(11, 50, 8.0);
  const MlpArchitecture a{4, {}, 3, Activation::kRelu};
  const LossFn ce = LossFn::cross_entropy(3);
  SgdConfig c = small_sgd();
  c.schedule = {{30, 1.0}, {5, 0.1}};
  const MlpModel m = train_regular(d, a, ce, c);
  CHECK(evaluate(m, d, ce).error_rate == 0.0);
}

TEST_CASE("huge weight decay collapses the model") {
  const Dataset d = blobs(12);
  const MlpArchitecture a{4, {}, 3, Activation::kRelu};
  const LossFn ce = LossFn::cross_entropy(3);
  SgdConfig c = small_sgd();
  c.momentum = 0.0;
  c.lr = 1e-4;
  c.weight_decay = 5e3;
  c.schedule = {{20, 1.0}};
  const MlpModel m = train_regular(d, a, ce, c);
  CHECK(param_norm_sq(m) < 1e-6);
  CHECK(std::abs(evaluate(m, d, ce).mean_loss - std::log(3.0)) < 1e-2);
}

TEST_CASE("base_loop") {
  const Dataset d = blobs(4);
  const MlpArchitecture a{4, {6}, 3, Activation::kTanh};
  const LossFn ce = LossFn::cross_entropy(3);
  const SgdConfig c = small_sgd(2);
  const MlpModel theta0 = init_random(a, RngStream(c.seed).child(kInitStreamDomain));
  const auto one = base_loop(d, theta0, ce, c, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == train_regular(d, a, ce, c));

  std::vector<MlpModel> starts;
  TrainingHooks hooks;
  hooks.on_stage_start = [&](std::size_t, const MlpModel& s) { starts.push_back(s); };
  const auto three = base_loop(d, theta0, ce, c, 3, hooks);
  REQUIRE(three.size() == 3);
  CHECK(three[0] == one[0]);
  CHECK(starts[1] == three[0]);
  CHECK(starts[2] == three[1]);
  CHECK_THROWS_AS(base_loop(d, theta0, ce, c, 0), InvalidParameter);
}

TEST_CASE("base-lambda-alpha") {
  const Dataset d = blobs(5);
  const MlpArchitecture a{4, {6}, 3, Activation::kRelu};
  const LossFn ce = LossFn::cross_entropy(3);
  SgdConfig c = small_sgd(1);
  CHECK(train_base_lambda_alpha(d, a, ce, c, 1.0) == train_regular(d, a, ce, c));
  c.schedule = {{15, 1.0}};
  CHECK(param_norm_sq(train_base_lambda_alpha(d, a, ce, c, 0.01)) <
        param_norm_sq(train_base_lambda_alpha(d, a, ce, c, 1.0)));
  CHECK_THROWS_AS(train_base_lambda_alpha(d, a, ce, c, 0.0), InvalidParameter);
}

TEST_CASE("label smoothing with epsilon zero is regular training") {
  const Dataset d = blobs(6);
  const MlpArchitecture a{4, {5}, 3, Activation::kRelu};
  const LossFn ce = LossFn::cross_entropy(3);
  const SgdConfig c = small_sgd(3);
  CHECK(train_label_smoothing(d, a, c, 0.0) == train_regular(d, a, ce, c));
  CHECK_FALSE(train_label_smoothing(d, a, c, 0.2) == train_regular(d, a, ce, c));
  CHECK_THROWS_AS(train_label_smoothing(d, a, c, 1.0), InvalidParameter);
}

TEST_CASE("GULF2 with alpha one follows the regular gradient") {
  const Dataset d = blobs(7);
  const MlpArchitecture a{4, {6}, 3, Activation::kRelu};
  const LossFn ce = LossFn::cross_entropy(3);
  const SgdConfig c = small_sgd(4);
  const MlpModel theta0 = init_random(a, RngStream(9));

  std::vector<Vector> plain, guided;
  TrainingHooks hp, hg;
  hp.on_step = [&](std::size_t, std::size_t, std::span<const double> g) { plain.emplace_back(g.begin(), g.end()); };
  hg.on_step = [&](std::size_t, std::size_t, std::span<const double> g) { guided.emplace_back(g.begin(), g.end()); };
  const auto loop = base_loop(d, theta0, ce, c, 1, hp);
  const MlpModel g = gulf_stage(theta0, d, ce, GeneratorKind::kLossAsGenerator, 1.0, 1, c, 0, hg);
  REQUIRE(plain.size() == guided.size());
  for (std::size_t i = 0; i < plain.size(); ++i) CHECK(max_abs_diff(plain[i], guided[i]) <= 1e-12);
  CHECK(g == loop[0]);
}

TEST_CASE("GULF2 gradient forms agree") {
  RngStream rng(31);
  const LossFn ce = LossFn::cross_entropy(3);
  const MlpArchitecture a{4, {5}, 3, Activation::kTanh};
  const Matrix x = test::random_matrix(rng, 12, 4);
  std::vector<int> y(12);
  for (int& v : y) v = static_cast<int>(rng.next_below(3));
  const MlpModel theta_t = init_random(a, rng.child(1));
  const MlpModel far = init_random(a, rng.child(2));

  CHECK(prop22_grad_identity_check(theta_t, theta_t, x, y, ce, 0.3).max_abs_deviation < 1e-8);
  CHECK(prop22_grad_identity_check(far, theta_t, x, y, ce, 0.7).max_abs_deviation < 1e-8);
  CHECK(prop22_grad_identity_check(far, theta_t, x, y, ce, 1.0).max_abs_deviation < 1e-12);
  CHECK_THROWS_AS(prop22_grad_identity_check(far, theta_t, x, y, LossFn::squared_hinge(), 0.3),
                  UnsupportedOperation);

  // Output-space forms against a finite-difference oracle of the values.
  const Matrix f = forward(far, x), ft = forward(theta_t, x);
  const Matrix gb = bregman_form_output_grad(f, ft, y, ce, 0.4);
  const Matrix gd = distillation_form_output_grad(f, ft, y, ce, 0.4);
  CHECK(max_abs_diff(gb.data(), gd.data()) < 1e-14);
  const Vector num = finite_diff_grad(
      [&](std::span<const double> v) { return bregman_form_value(Matrix(12, 3, Vector(v.begin(), v.end())), ft, y, ce, 0.4); },
      f.data());
  // Values are means over rows, the output gradients are per row.
  for (std::size_t i = 0; i < num.size(); ++i) CHECK(std::abs(num[i] * 12.0 - gb.data()[i]) < 1e-6);
  const double vb0 = bregman_form_value(f, ft, y, ce, 0.4) - distillation_form_value(f, ft, y, ce, 0.4);
  const double vb1 = bregman_form_value(ft, ft, y, ce, 0.4) - distillation_form_value(ft, ft, y, ce, 0.4);
  CHECK(std::abs(vb0 - vb1) < 1e-12);
}

TEST_CASE("exact guide gradient matches the contracted target") {
  RngStream rng(8);
  const LossFn ce = LossFn::cross_entropy(3);
  const Matrix f(6, 3, rng_normal(rng, 18, 0.0, 1.0));
  const Matrix ft(6, 3, rng_normal(rng, 18, 0.0, 1.0));
  const std::vector<int> y{0, 1, 2, 2, 1, 0};
  for (std::size_t m : {1u, 3u}) {
    const double gamma = 0.2;
    const double alpha = 1.0 - std::pow(1.0 - gamma, static_cast<double>(m));
    const Matrix exact = exact_guide_output_grad(f, ft, y, ce, gamma, m);
    const Matrix dist = distillation_form_output_grad(f, ft, y, ce, alpha);
    CHECK(max_abs_diff(exact.data(), dist.data()) < 1e-8);
  }
}

TEST_CASE("GULF1 first step gradient is alpha times the regular gradient") {
  const Dataset d = blobs(13, 10);
  const MlpArchitecture a{4, {5}, 3, Activation::kTanh};
  const LossFn ce = LossFn::cross_entropy(3);
  const MlpModel theta = init_random(a, RngStream(3));
  const FrozenReference frozen{theta};
  std::vector<std::size_t> batch(d.size());
  std::iota(batch.begin(), batch.end(), 0);
  const double alpha = 0.05;
  const Vector g1 = gulf_objective(d, ce, frozen, GeneratorKind::kHalfSquaredNorm, alpha, 1)(theta, batch);
  const Vector g0 = regular_objective(d, ce)(theta, batch);
  for (std::size_t i = 0; i < g0.size(); ++i) CHECK(std::abs(g1[i] - alpha * g0[i]) < 1e-12);

  // More guide steps only change the gradient at second order in alpha.
  const Vector g3 = gulf_objective(d, ce, frozen, GeneratorKind::kHalfSquaredNorm, alpha, 3)(theta, batch);
  double scale = 0.0, off = 0.0;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    scale = std::max(scale, std::abs(3.0 * alpha * g0[i]));
    off = std::max(off, std::abs(g3[i] - 3.0 * alpha * g0[i]));
  }
  CHECK(off < 0.1 * scale);
}

TEST_CASE("gulf_initial_model and gulf_train") {
  const Dataset d = blobs(14);
  const MlpArchitecture a{4, {6}, 3, Activation::kRelu};
  const LossFn ce = LossFn::cross_entropy(3);
  GulfConfig g;
  g.alpha = 0.3;
  g.stages = 3;
  g.sgd = small_sgd(7);

  CHECK(gulf_initial_model(a, g, std::nullopt) == init_random(a, RngStream(7).child(kInitStreamDomain)));
  g.init = InitStrategy::kBase;
  CHECK_THROWS_AS(gulf_initial_model(a, g, std::nullopt), ConfigError);
  const MlpModel base = train_regular(d, a, ce, g.sgd);
  CHECK(gulf_initial_model(a, g, base) == base);
  const MlpArchitecture other{4, {7}, 3, Activation::kRelu};
  CHECK_THROWS_AS(gulf_initial_model(other, g, base), ConfigError);
  g.init = InitStrategy::kBaseShrunk;
  g.shrink_v = 2.0;
  CHECK(gulf_initial_model(a, g, base) == shrink_last_layer(base, 2.0));

  g.init = InitStrategy::kBase;
  std::vector<MlpModel> starts;
  TrainingHooks hooks;
  hooks.on_stage_start = [&](std::size_t, const MlpModel& s) { starts.push_back(s); };
  const auto out = gulf_train(d, a, ce, g, base, hooks);
  REQUIRE(out.size() == 3);
  CHECK(starts[0] == base);
  CHECK(starts[1] == out[0]);
  CHECK(starts[2] == out[1]);
  CHECK(out == gulf_train(d, a, ce, g, base));

  g.stages = 1;
  g.init = InitStrategy::kBaseShrunk;
  const auto shrunk = gulf_train(d, a, ce, g, base);
  CHECK(shrunk.size() == 1);

  g.alpha = 0.0;
  CHECK_THROWS_AS(gulf_train(d, a, ce, g, base), InvalidParameter);
}

TEST_CASE("GULF2 guide targets are probability rows") {
  const Dataset d = blobs(15);
  const MlpArchitecture a{4, {6}, 3, Activation::kRelu};
  const LossFn ce = LossFn::cross_entropy(3);
  double worst = 0.0;
  bool in_range = true;
  std::size_t batches = 0;
  TrainingHooks hooks;
  hooks.on_guide = [&](std::size_t, const GuideTarget& t) {
    const ProbabilityCheck c = check_probability_rows(t.values);
    worst = std::max(worst, c.max_row_sum_error);
    in_range = in_range && c.entries_in_unit_interval;
    ++batches;
  };
  gulf_stage(init_random(a, RngStream(1)), d, ce, GeneratorKind::kLossAsGenerator, 0.3, 1, small_sgd(), 0, hooks);
  CHECK(batches > 0);
  CHECK(worst <= 1e-12);
  CHECK(in_range);
}

TEST_CASE("GULF2 with the squared loss uses the Bregman form") {
  const Dataset d = blobs(16);
  const MlpArchitecture a{4, {6}, 3, Activation::kRelu};
  const LossFn sq = LossFn::squared(3);
  GulfConfig g;
  g.alpha = 0.5;
  g.stages = 2;
  g.sgd = small_sgd(2);
  g.sgd.lr = 0.01;
  const auto out = gulf_train(d, a, sq, g, std::nullopt);
  CHECK(out.size() == 2);
  CHECK(all_finite(out.back().theta()));
}
