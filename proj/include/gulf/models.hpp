#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gulf/numerics.hpp"

namespace gulf {

enum class Activation { kRelu, kTanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct MlpArchitecture {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  Activation activation = Activation::kRelu;

  void validate() const;
  std::size_t num_layers() const noexcept { return hidden_dims.size() + 1; }
  std::size_t layer_in(std::size_t layer) const;
  std::size_t layer_out(std::size_t layer) const;
  std::size_t param_count() const;
  // Offset of layer `layer`'s weight block in theta; its bias follows the
  // out x in weights immediately.
  std::size_t layer_offset(std::size_t layer) const;

  bool operator==(const MlpArchitecture&) const = default;
};

struct LayerParams {
  Matrix weights;  // out x in
  Vector bias;     // out
};

// Multilayer perceptron with a flat parameter vector.
//
// theta layout is layer-major; within a layer the row-major (out x in) weight
// matrix comes first, then the bias. Hidden layers apply the activation;
// the last layer is affine and produces logits.
class MlpModel {
 public:
  MlpModel(MlpArchitecture arch, Vector theta);

  static MlpModel zeros(const MlpArchitecture& arch);
  static MlpModel from_layers(const MlpArchitecture& arch, const std::vector<LayerParams>& layers);

  const MlpArchitecture& architecture() const noexcept { return arch_; }
  const Vector& theta() const noexcept { return theta_; }

  std::vector<LayerParams> layers() const;

  // theta += delta
  void add_to_theta(std::span<const double> delta);

  bool operator==(const MlpModel&) const = default;

 private:
  MlpArchitecture arch_;
  Vector theta_;
};

// Kaiming normal weights: N(0, 2/fan_in) for relu, N(0, 1/fan_in) for tanh;
// zero biases.
MlpModel init_random(const MlpArchitecture& arch, RngStream stream);

Matrix forward(const MlpModel& model, const Matrix& x);

// Gradient of sum_i grad_out[i] . f(theta; x_i) with respect to theta.
Vector backward(const MlpModel& model, const Matrix& x, const Matrix& grad_out);

// Activations of every layer from one forward pass, reused by backward.
struct ForwardTape {
  std::vector<Matrix> pre;   // pre-activation per layer
  std::vector<Matrix> post;  // post[0] is the input, post[l + 1] the layer output
  const Matrix& logits() const { return post.back(); }
};
ForwardTape forward_tape(const MlpModel& model, const Matrix& x);
Vector backward(const MlpModel& model, const ForwardTape& tape, const Matrix& grad_out);

// Divides the final layer's weights and bias by v.
MlpModel shrink_last_layer(const MlpModel& model, double v);

double param_norm_sq(const MlpModel& model);

// Checkpoint JSON: {"architecture": {...}, "theta": [...]} with 17 significant
// digits per float, so a save/load round trip is bitwise exact.
std::string checkpoint_to_json(const MlpModel& model);
MlpModel checkpoint_from_json(std::string_view text);
void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(const std::filesystem::path& path);

// Formats a double with 17 significant digits.
std::string format_double(double x);

}  // namespace gulf
