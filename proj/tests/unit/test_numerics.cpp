#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "doctest.h"
#include "gulf/errors.hpp"
#include "gulf/numerics.hpp"
#include "test_support.hpp"

using namespace gulf;

TEST_CASE("matrix construction and row access") {
  Matrix m(2, 3, Vector{1, 2, 3, 4, 5, 6});
  CHECK(m(1, 0) == 4.0);
  CHECK(m.row(1)[2] == 6.0);
  CHECK_THROWS_AS(Matrix(2, 2, Vector{1, 2, 3}), InvalidDimension);

  const std::vector<std::size_t> pick{1, 0, 1};
  const Matrix g = m.gather_rows(pick);
  CHECK(g.rows() == 3);
  CHECK(g(0, 0) == 4.0);
  CHECK(g(1, 2) == 3.0);
  CHECK(Matrix::identity(3)(2, 2) == 1.0);
  CHECK(Matrix::identity(3)(0, 2) == 0.0);
}

TEST_CASE("philox known-answer vectors") {
  // Published Random123 test vectors for philox4x32 with 10 rounds.
  using Block = std::array<std::uint32_t, 4>;
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});

  RngStream s(0);
  CHECK(s.next_u64() == ((std::uint64_t{0xe169c58du} << 32) | 0x6627e8d5u));
  CHECK(s.next_u64() == ((std::uint64_t{0x9b00dbd8u} << 32) | 0xbc57ac4cu));
}

TEST_CASE("splitmix64 reference values") {
  // First outputs of the reference splitmix64 generator seeded with 0 are
  // splitmix64(0), splitmix64(golden), ...
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafull);
  CHECK(splitmix64(0x9E3779B97F4A7C15ull) == 0x6e789e6aa1b965f4ull);
}

TEST_CASE("rng streams are reproducible and children differ") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  const RngStream root(7);
  RngStream c0 = root.child(0), c0_again = root.child(0), c1 = root.child(1);
  int equal = 0;
  for (int i = 0; i < 64; ++i) {
    const auto x = c0.next_u64();
    CHECK(x == c0_again.next_u64());
    if (x == c1.next_u64()) ++equal;
  }
  CHECK(equal == 0);
  CHECK(root.child(3).seed() != RngStream(8).child(3).seed());
}

TEST_CASE("uniform and bounded draws stay in range") {
  RngStream s(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.next_uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    CHECK(s.next_below(7) < 7u);
  }
  const auto perm = rng_permutation(s, 50);
  std::set<std::size_t> seen(perm.begin(), perm.end());
  CHECK(seen.size() == 50);
  CHECK(*seen.rbegin() == 49);
}

TEST_CASE("stable_softmax examples") {
  const Vector a = stable_softmax(Vector{0.0, 0.0});
  CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.5).epsilon(1e-15));

  const Vector b = stable_softmax(Vector{1000.0, 1000.0});
  CHECK(b[0] == 0.5);
  CHECK(b[1] == 0.5);

  const Vector c = stable_softmax(Vector{0.0, std::log(3.0)});
  CHECK(std::abs(c[0] - 0.25) < 1e-15);
  CHECK(std::abs(c[1] - 0.75) < 1e-15);

  CHECK_THROWS_AS(stable_softmax(Vector{}), InvalidDimension);
  CHECK_THROWS_AS(stable_softmax(Vector{1.0}), InvalidDimension);
}

TEST_CASE("stable_softmax sums to one and is shift invariant") {
  RngStream rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.next_below(9);
    Vector v = rng_normal(rng, k, 0.0, 30.0);
    const Vector p = stable_softmax(v);
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    CHECK(std::abs(sum - 1.0) < 1e-12);
    for (double x : p) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
    const double shift = 500.0 * (rng.next_uniform() - 0.5);
    for (double& x : v) x += shift;
    CHECK(max_abs_diff(stable_softmax(v), p) <= 1e-14);
  }
  const Vector extreme = stable_softmax(Vector{-1e300, 1e300, 0.0});
  CHECK(extreme[1] == 1.0);
  CHECK(all_finite(extreme));
}

TEST_CASE("log_sum_exp examples") {
  CHECK(std::abs(log_sum_exp(Vector{0.0, 0.0}) - std::log(2.0)) < 1e-15);
  CHECK(log_sum_exp(Vector{-3.25}) == -3.25);
  const double big = log_sum_exp(Vector{1000.0, 1000.0});
  CHECK(std::abs(big - (1000.0 + std::log(2.0))) / big < 1e-12);
  CHECK_THROWS_AS(log_sum_exp(Vector{}), InvalidDimension);
}

TEST_CASE("log_sum_exp matches an extended precision oracle") {
  RngStream rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector v = rng_normal(rng, 1 + rng.next_below(8), 0.0, 5.0);
    long double acc = 0.0L;
    for (double x : v) acc += std::exp(static_cast<long double>(x));
    const double oracle = static_cast<double>(std::log(acc));
    CHECK(std::abs(log_sum_exp(v) - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_CASE("finite_diff_grad examples") {
  const Vector g = finite_diff_grad([](std::span<const double> x) { return x[0] * x[0]; }, Vector{3.0}, 1e-5);
  CHECK(std::abs(g[0] - 6.0) < 1e-8);

  const Vector z = finite_diff_grad([](std::span<const double>) { return 4.5; }, Vector{1.0, -2.0, 3.0});
  for (double v : z) CHECK(v == 0.0);

  // Cross-entropy at random logits against p - y.
  RngStream rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector u = rng_normal(rng, 4, 0.0, 2.0);
    const int y = static_cast<int>(rng.next_below(4));
    auto ce = [y](std::span<const double> v) { return log_sum_exp(v) - v[static_cast<std::size_t>(y)]; };
    const Vector fd = finite_diff_grad(ce, u);
    Vector analytic = stable_softmax(u);
    analytic[static_cast<std::size_t>(y)] -= 1.0;
    CHECK(max_abs_diff(fd, analytic) < 1e-7);
  }
}

TEST_CASE("finite_diff_grad reports the failing coordinate") {
  auto fn = [](std::span<const double> x) { return x[1] > 1.0 ? std::numeric_limits<double>::quiet_NaN() : x[0]; };
  try {
    finite_diff_grad(fn, Vector{0.0, 1.0, 0.0});
    FAIL("expected an oracle failure");
  } catch (const OracleFailure& e) {
    CHECK(e.coordinate() == 1);
  }
  CHECK_THROWS_AS(finite_diff_grad(fn, Vector{0.0, 0.0}, 0.0), InvalidParameter);
}

TEST_CASE("rng_normal examples") {
  RngStream s(1);
  const Vector flat = rng_normal(s, 5, 2.5, 0.0);
  for (double v : flat) CHECK(v == 2.5);

  RngStream a(77), b(77);
  CHECK(rng_normal(a, 100, 0.0, 1.0) == rng_normal(b, 100, 0.0, 1.0));

  RngStream big(2024);
  const Vector draws = rng_normal(big, 100000, 0.0, 1.0);
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / draws.size();
  double var = 0.0;
  for (double x : draws) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / draws.size());
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(sd - 1.0) < 0.02);

  CHECK_THROWS_AS(rng_normal(s, 3, 0.0, -1.0), InvalidParameter);
}

TEST_CASE("vector helpers") {
  const Vector a{1, 2, 3}, b{4, -5, 6};
  CHECK(dot(a, b) == 12.0);
  CHECK(norm_sq(a) == 14.0);
  CHECK(max_abs_diff(a, b) == 7.0);
  Vector y = b;
  axpy(2.0, a, y);
  CHECK(y == Vector{6, -1, 12});
  const Matrix m(2, 3, Vector{1, 0, 1, 0, 1, 0});
  CHECK(matvec(m, a) == Vector{4, 2});
  CHECK(all_finite(a));
  CHECK_FALSE(all_finite(Vector{1.0, std::numeric_limits<double>::quiet_NaN()}));
  CHECK_THROWS_AS(dot(a, Vector{1.0}), InvalidDimension);
}

TEST_CASE("cholesky_solve and power_iteration") {
  const Matrix spd(3, 3, Vector{4, 1, 0, 1, 3, 1, 0, 1, 2});
  const Vector x_true{1.0, -2.0, 0.5};
  const Vector b = matvec(spd, x_true);
  CHECK(max_abs_diff(cholesky_solve(spd, b), x_true) < 1e-12);

  const Matrix indefinite(2, 2, Vector{1, 2, 2, 1});
  CHECK_THROWS_AS(cholesky_solve(indefinite, Vector{1, 1}), InvalidInput);

  const Matrix diag(3, 3, Vector{1, 0, 0, 0, 5, 0, 0, 0, 2});
  const double top = power_iteration([&](std::span<const double> v) { return matvec(diag, v); }, 3, RngStream(4));
  CHECK(std::abs(top - 5.0) < 1e-8);
}
