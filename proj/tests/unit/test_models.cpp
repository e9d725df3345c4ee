#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gulf/errors.hpp"
#include "gulf/models.hpp"
#include "gulf/verify.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace gulf;

TEST_CASE("architecture layout") {
  const MlpArchitecture a{3, {4, 2}, 5, Activation::kTanh};
  CHECK(a.num_layers() == 3);
  CHECK(a.param_count() == (4 * 3 + 4) + (2 * 4 + 2) + (5 * 2 + 5));
  CHECK(a.layer_offset(0) == 0);
  CHECK(a.layer_offset(1) == 16);
  CHECK(a.layer_offset(2) == 26);
  CHECK_THROWS_AS((MlpArchitecture{0, {}, 2, Activation::kRelu}.validate()), InvalidParameter);
  CHECK_THROWS_AS((MlpArchitecture{2, {0}, 2, Activation::kRelu}.validate()), InvalidParameter);
  CHECK_THROWS_AS(MlpModel(a, Vector(3)), InvalidDimension);
  CHECK(activation_from_string(to_string(Activation::kRelu)) == Activation::kRelu);
}

TEST_CASE("init_random") {
  const MlpArchitecture linear{4, {}, 3, Activation::kRelu};
  const MlpModel m = init_random(linear, RngStream(1));
  const auto layers = m.layers();
  for (double b : layers[0].bias) CHECK(b == 0.0);
  CHECK(m == init_random(linear, RngStream(1)));
  CHECK_FALSE(m == init_random(linear, RngStream(2)));

  const MlpArchitecture wide{100, {100}, 1, Activation::kRelu};
  const MlpModel w = init_random(wide, RngStream(5));
  const Matrix w0 = w.layers()[0].weights;
  double ss = 0.0;
  for (double v : w0.data()) ss += v * v;
  const double sd = std::sqrt(ss / static_cast<double>(w0.data().size()));
  CHECK(std::abs(sd - std::sqrt(0.02)) < 0.03 * std::sqrt(0.02));

  const MlpArchitecture tanh_arch{50, {200}, 1, Activation::kTanh};
  const Matrix t0 = init_random(tanh_arch, RngStream(6)).layers()[0].weights;
  ss = 0.0;
  for (double v : t0.data()) ss += v * v;
  CHECK(std::abs(std::sqrt(ss / t0.data().size()) - std::sqrt(1.0 / 50)) < 0.03 * std::sqrt(1.0 / 50));
}

TEST_CASE("forward examples") {
  const MlpArchitecture a{3, {5}, 2, Activation::kRelu};
  const Matrix x(4, 3, Vector{1, 2, 3, -1, 0, 2, 0.5, 0.5, 0.5, 9, -9, 1});
  const Matrix z = forward(MlpModel::zeros(a), x);
  for (double v : z.data()) CHECK(v == 0.0);

  const MlpArchitecture lin{3, {}, 2, Activation::kTanh};
  const MlpModel m(lin, Vector{1, 2, 3, -1, 0, 1, 0.5, -0.25});
  const Matrix out = forward(m, x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    CHECK(out(i, 0) == x(i, 0) * 1 + x(i, 1) * 2 + x(i, 2) * 3 + 0.5);
    CHECK(out(i, 1) == -x(i, 0) + x(i, 2) - 0.25);
  }
  CHECK_THROWS_AS(forward(m, Matrix(2, 4)), InvalidDimension);
}

TEST_CASE("forward perturbation follows the Jacobian") {
  RngStream rng(3);
  const MlpArchitecture a{3, {6}, 2, Activation::kTanh};
  const MlpModel m = init_random(a, rng.child(0));
  const Matrix x = test::random_matrix(rng, 5, 3);
  const Vector delta = rng_normal(rng, a.param_count(), 0.0, 1.0);
  const Matrix f0 = forward(m, x);
  // J delta through backward: e_i,k . J delta for every output coordinate.
  std::vector<double> errs;
  for (double s : {1e-2, 5e-3}) {
    MlpModel moved = m;
    Vector d = delta;
    for (double& v : d) v *= s;
    moved.add_to_theta(d);
    const Matrix f1 = forward(moved, x);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t k = 0; k < 2; ++k) {
        Matrix unit(x.rows(), 2);
        unit(i, k) = 1.0;
        const double lin = dot(backward(m, x, unit), d);
        worst = std::max(worst, std::abs(f1(i, k) - f0(i, k) - lin));
      }
    }
    errs.push_back(worst);
  }
  // Halving the step cuts the remainder by about four.
  CHECK(errs[1] < 0.3 * errs[0]);
}

TEST_CASE("backward examples") {
  RngStream rng(9);
  const MlpArchitecture a{4, {5, 3}, 2, Activation::kRelu};
  const MlpModel m = init_random(a, rng.child(1));
  const Matrix x = test::random_matrix(rng, 6, 4);
  const Vector zero = backward(m, x, Matrix(6, 2));
  for (double v : zero) CHECK(v == 0.0);

  const Matrix g = test::random_matrix(rng, 6, 2);
  const std::vector<std::size_t> first{0, 1, 2}, second{3, 4, 5};
  const Vector whole = backward(m, x, g);
  Vector parts = backward(m, x.gather_rows(first), g.gather_rows(first));
  axpy(1.0, backward(m, x.gather_rows(second), g.gather_rows(second)), parts);
  CHECK(max_abs_diff(whole, parts) < 1e-13);
  CHECK_THROWS_AS(backward(m, x, Matrix(6, 3)), InvalidDimension);
}

TEST_CASE("backward against finite differences on the architecture matrix") {
  RngStream rng(44);
  const LossFn ce = LossFn::cross_entropy(3);
  for (const MlpArchitecture& a : gradient_test_architectures(4, 3)) {
    Dataset d{test::random_matrix(rng, 10, 4), {0, 1, 2, 0, 1, 2, 0, 1, 2, 0}, 3, {}};
    MlpModel m = init_random(a, rng.child(a.param_count()));
    while (min_relu_margin(m, d.features) < 1e-3) m = init_random(a, rng.child(rng.next_u64()));
    for (int j = 0; j < 20; ++j) {
      Vector dir = rng_normal(rng, a.param_count(), 0.0, 1.0);
      CHECK(directional_gradient_error(m, d, ce, dir) < 1e-6);
    }
  }
}

TEST_CASE("relu derivative at the kink is zero") {
  const MlpArchitecture a{1, {1}, 1, Activation::kRelu};
  const MlpModel m(a, Vector{1.0, 0.0, 1.0, 0.0});
  const Matrix x(1, 1, Vector{0.0});
  const Vector g = backward(m, x, Matrix(1, 1, Vector{1.0}));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("shrink_last_layer") {
  RngStream rng(12);
  const MlpArchitecture lin{3, {}, 2, Activation::kRelu};
  const MlpModel m = init_random(lin, rng.child(0));
  const Matrix x = test::random_matrix(rng, 5, 3);
  CHECK(shrink_last_layer(m, 1.0) == m);
  const Matrix f = forward(m, x), half = forward(shrink_last_layer(m, 2.0), x);
  for (std::size_t i = 0; i < f.data().size(); ++i) CHECK(half.data()[i] == f.data()[i] / 2.0);

  const MlpArchitecture mlp{3, {4}, 2, Activation::kTanh};
  MlpModel deep = init_random(mlp, rng.child(1));
  Vector bias_shift(mlp.param_count(), 0.0);
  for (std::size_t i = mlp.layer_offset(1) + 8; i < mlp.param_count(); ++i) bias_shift[i] = 0.3;
  deep.add_to_theta(bias_shift);
  const MlpModel shrunk = shrink_last_layer(deep, 2.0);
  for (std::size_t i = 0; i < mlp.layer_offset(1); ++i) CHECK(shrunk.theta()[i] == deep.theta()[i]);
  const Matrix fd = forward(deep, x), fs = forward(shrunk, x);
  for (std::size_t i = 0; i < fd.data().size(); ++i) CHECK(std::abs(fs.data()[i] - fd.data()[i] / 2.0) < 1e-15);

  double prev = INFINITY;
  for (double v : {1.0, 2.0, 4.0, 8.0}) {
    const double n = param_norm_sq(shrink_last_layer(deep, v));
    CHECK(n < prev);
    prev = n;
  }
  CHECK_THROWS_AS(shrink_last_layer(m, 0.0), InvalidParameter);
  CHECK_THROWS_AS(shrink_last_layer(m, -1.0), InvalidParameter);
}

TEST_CASE("last layer scaling is homogeneous") {
  RngStream rng(2);
  const MlpArchitecture a{3, {5}, 2, Activation::kRelu};
  const MlpModel m = init_random(a, rng.child(0));
  const Matrix x = test::random_matrix(rng, 4, 3);
  auto layers = m.layers();
  for (double& w : layers.back().weights.data()) w *= 4.0;
  for (double& b : layers.back().bias) b *= 4.0;
  const Matrix f = forward(m, x), g = forward(MlpModel::from_layers(a, layers), x);
  for (std::size_t i = 0; i < f.data().size(); ++i) CHECK(g.data()[i] == 4.0 * f.data()[i]);
}

TEST_CASE("param_norm_sq and layer round trip") {
  const MlpArchitecture a{1, {}, 1, Activation::kRelu};
  CHECK(param_norm_sq(MlpModel::zeros(a)) == 0.0);
  CHECK(param_norm_sq(MlpModel(a, Vector{3.0, 4.0})) == 25.0);

  const MlpArchitecture b{3, {4, 2}, 3, Activation::kTanh};
  const MlpModel m = init_random(b, RngStream(8));
  CHECK(MlpModel::from_layers(b, m.layers()) == m);
}

TEST_CASE("checkpoint JSON round trip is bitwise") {
  const auto dir = test::scratch_dir("models");
  const MlpArchitecture a{3, {4}, 2, Activation::kTanh};
  MlpModel m = init_random(a, RngStream(10));
  Vector odd(a.param_count(), 0.0);
  odd[0] = 1e-300;
  odd[1] = 0.1;
  odd[2] = -1.0 / 3.0;
  m.add_to_theta(odd);
  save_checkpoint(m, dir / "stage_1.json");
  CHECK(load_checkpoint(dir / "stage_1.json") == m);

  const std::string text = checkpoint_to_json(m);
  const auto doc = nlohmann::json::parse(text);
  CHECK(doc.contains("architecture"));
  CHECK(doc.at("theta").size() == a.param_count());
  CHECK(doc.at("architecture").at("activation") == "tanh");
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(checkpoint_from_json(text) == m);

  CHECK_THROWS_AS(checkpoint_from_json("{\"architecture\": 3}"), ParseError);
  CHECK_THROWS_AS(checkpoint_from_json("not json"), ParseError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), InvalidInput);
}
