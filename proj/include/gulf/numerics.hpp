#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace gulf {

using Vector = std::vector<double>;

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, Vector data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const Vector& data() const noexcept { return data_; }
  Vector& data() noexcept { return data_; }

  // Rows picked by index, in the given order.
  Matrix gather_rows(std::span<const std::size_t> indices) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

// Counter-based splittable generator (Philox4x32-10). The output sequence is a
// pure function of (seed, counter), so streams are reproducible everywhere.
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "philox4x32-10";

  explicit RngStream(std::uint64_t seed = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

  // Independent stream keyed by (seed, index). Does not advance this stream.
  RngStream child(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept;
  // Uniform on the open interval (0, 1).
  double next_uniform() noexcept;
  double next_normal() noexcept;
  // Uniform integer in [0, bound).
  std::uint64_t next_below(std::uint64_t bound) noexcept;

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t counter) const noexcept;

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// One Philox4x32 block with 10 rounds. A stream with seed s draws block
// (counter, 0, 0) under key (low32(s), high32(s)).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

Vector stable_softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> v);

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences, one coordinate at a time.
Vector finite_diff_grad(const ScalarFn& fn, std::span<const double> x, double eps = 1e-5);

Vector rng_normal(RngStream& stream, std::size_t n, double mean, double std_dev);

// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> rng_permutation(RngStream& stream, std::size_t n);

double dot(std::span<const double> a, std::span<const double> b);
double norm_sq(std::span<const double> v);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);
Vector matvec(const Matrix& m, std::span<const double> x);

bool all_finite(std::span<const double> v) noexcept;

// Solves A x = b for symmetric positive definite A.
Vector cholesky_solve(const Matrix& a, std::span<const double> b);

// Largest eigenvalue of a symmetric operator given as a matrix-vector product.
double power_iteration(const std::function<Vector(std::span<const double>)>& apply,
                       std::size_t dim, RngStream stream, std::size_t iterations = 200,
                       double tol = 1e-10);

}  // namespace gulf
