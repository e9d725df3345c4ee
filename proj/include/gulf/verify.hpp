#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gulf/data.hpp"
#include "gulf/losses.hpp"
#include "gulf/models.hpp"
#include "json.hpp"

namespace gulf {

struct VerifyCheck {
  std::string name;
  double max_deviation = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::string suite;
  std::vector<VerifyCheck> checks;
  double seconds = 0.0;

  bool passed() const;
  nlohmann::json to_json() const;
};

const std::vector<std::string>& verify_suites();

// Runs one named suite with fixed seeds. Unknown names throw ConfigError.
VerifyReport run_verify(std::string_view suite, std::uint64_t seed = 0);

// Individual suites.
VerifyReport verify_gradients(std::uint64_t seed = 0, std::size_t directions = 20);
VerifyReport verify_prop21(std::uint64_t seed = 0);
VerifyReport verify_prop22(std::uint64_t seed = 0, std::size_t tuples = 100);
VerifyReport verify_theorem21(std::uint64_t seed = 0);
VerifyReport verify_bregman(std::uint64_t seed = 0);

// The {0, 1, 2} hidden layers x {relu, tanh} matrix used by the gradient suite.
std::vector<MlpArchitecture> gradient_test_architectures(std::size_t input_dim, std::size_t output_dim);

// Relative error of the directional derivative of the mean loss along
// `direction`, analytic backprop against central differences.
double directional_gradient_error(const MlpModel& model, const Dataset& data, const LossFn& loss,
                                  std::span<const double> direction, double eps = 1e-5);

// Smallest |pre-activation| over all relu hidden units; infinity for tanh or
// linear models.
double min_relu_margin(const MlpModel& model, const Matrix& x);

// Step size for the descent check on a linear softmax model: 1 / L, with L
// the top Hessian eigenvalue of the regularized loss at theta = 0, where the
// binary logistic curvature peaks.
double descent_step_size(const Dataset& data, const MlpArchitecture& arch, const LossFn& loss, double lambda);

}  // namespace gulf
