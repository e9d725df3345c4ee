#include "gulf/models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gulf/errors.hpp"
#include "json.hpp"

namespace gulf {

std::string_view to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw InvalidParameter("unknown activation '" + std::string(name) + "'");
}

void MlpArchitecture::validate() const {
  if (input_dim < 1 || output_dim < 1) throw InvalidParameter("MLP dimensions must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw InvalidParameter("MLP hidden widths must be >= 1");
  }
}

std::size_t MlpArchitecture::layer_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t MlpArchitecture::layer_out(std::size_t layer) const {
  return layer == hidden_dims.size() ? output_dim : hidden_dims[layer];
}

std::size_t MlpArchitecture::layer_offset(std::size_t layer) const {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) offset += layer_out(l) * (layer_in(l) + 1);
  return offset;
}

std::size_t MlpArchitecture::param_count() const { return layer_offset(num_layers()); }

MlpModel::MlpModel(MlpArchitecture arch, Vector theta) : arch_(std::move(arch)), theta_(std::move(theta)) {
  arch_.validate();
  if (theta_.size() != arch_.param_count()) {
    throw InvalidDimension("theta has " + std::to_string(theta_.size()) + " entries, architecture needs " +
                           std::to_string(arch_.param_count()));
  }
}

MlpModel MlpModel::zeros(const MlpArchitecture& arch) {
  arch.validate();
  return MlpModel(arch, Vector(arch.param_count(), 0.0));
}

MlpModel MlpModel::from_layers(const MlpArchitecture& arch, const std::vector<LayerParams>& layers) {
  arch.validate();
  if (layers.size() != arch.num_layers()) throw InvalidDimension("layer count mismatch");
  Vector theta;
  theta.reserve(arch.param_count());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    if (p.weights.rows() != arch.layer_out(l) || p.weights.cols() != arch.layer_in(l) ||
        p.bias.size() != arch.layer_out(l)) {
      throw InvalidDimension("layer " + std::to_string(l) + " has the wrong shape");
    }
    theta.insert(theta.end(), p.weights.data().begin(), p.weights.data().end());
    theta.insert(theta.end(), p.bias.begin(), p.bias.end());
  }
  return MlpModel(arch, std::move(theta));
}

std::vector<LayerParams> MlpModel::layers() const {
  std::vector<LayerParams> out;
  for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
    const std::size_t in = arch_.layer_in(l), o = arch_.layer_out(l);
    const auto begin = theta_.begin() + static_cast<std::ptrdiff_t>(arch_.layer_offset(l));
    const auto wend = begin + static_cast<std::ptrdiff_t>(o * in);
    out.push_back({Matrix(o, in, Vector(begin, wend)), Vector(wend, wend + static_cast<std::ptrdiff_t>(o))});
  }
  return out;
}

void MlpModel::add_to_theta(std::span<const double> delta) {
  if (delta.size() != theta_.size()) throw InvalidDimension("parameter update has the wrong length");
  for (std::size_t i = 0; i < theta_.size(); ++i) theta_[i] += delta[i];
}

MlpModel init_random(const MlpArchitecture& arch, RngStream stream) {
  arch.validate();
  Vector theta(arch.param_count(), 0.0);
  const double gain = arch.activation == Activation::kRelu ? 2.0 : 1.0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::size_t in = arch.layer_in(l), o = arch.layer_out(l);
    const double sd = std::sqrt(gain / static_cast<double>(in));
    const std::size_t offset = arch.layer_offset(l);
    for (std::size_t k = 0; k < o * in; ++k) theta[offset + k] = sd * stream.next_normal();
  }
  return MlpModel(arch, std::move(theta));
}

namespace {

inline double activate(Activation a, double z) {
  return a == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative given pre-activation z and activation value y = act(z). The relu
// subgradient at 0 is 0.
inline double activate_deriv(Activation a, double z, double y) {
  return a == Activation::kRelu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - y * y;
}

}  // namespace

ForwardTape forward_tape(const MlpModel& model, const Matrix& x) {
  const auto& arch = model.architecture();
  if (x.cols() != arch.input_dim) {
    throw InvalidDimension("input has " + std::to_string(x.cols()) + " columns, model expects " +
                           std::to_string(arch.input_dim));
  }
  const auto& theta = model.theta();
  ForwardTape tape;
  tape.post.push_back(x);
  const std::size_t n = x.rows();
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::size_t in = arch.layer_in(l), o = arch.layer_out(l);
    const double* w = theta.data() + arch.layer_offset(l);
    const double* b = w + o * in;
    const Matrix& a = tape.post.back();
    Matrix z(n, o);
    for (std::size_t i = 0; i < n; ++i) {
      const double* ai = a.row(i).data();
      for (std::size_t k = 0; k < o; ++k) {
        const double* wk = w + k * in;
        double s = b[k];
        for (std::size_t j = 0; j < in; ++j) s += wk[j] * ai[j];
        z(i, k) = s;
      }
    }
    const bool last = l + 1 == arch.num_layers();
    Matrix out = z;
    if (!last) {
      for (double& v : out.data()) v = activate(arch.activation, v);
    }
    tape.pre.push_back(std::move(z));
    tape.post.push_back(std::move(out));
  }
  return tape;
}

Matrix forward(const MlpModel& model, const Matrix& x) { return forward_tape(model, x).post.back(); }

Vector backward(const MlpModel& model, const ForwardTape& tape, const Matrix& grad_out) {
  const auto& arch = model.architecture();
  const Matrix& logits = tape.logits();
  if (grad_out.rows() != logits.rows() || grad_out.cols() != logits.cols()) {
    throw InvalidDimension("grad_out shape does not match the forward output");
  }
  const auto& theta = model.theta();
  Vector grad(theta.size(), 0.0);
  const std::size_t n = logits.rows();
  Matrix delta = grad_out;
  for (std::size_t l = arch.num_layers(); l-- > 0;) {
    const std::size_t in = arch.layer_in(l), o = arch.layer_out(l);
    const std::size_t offset = arch.layer_offset(l);
    const double* w = theta.data() + offset;
    double* gw = grad.data() + offset;
    double* gb = gw + o * in;
    const Matrix& a = tape.post[l];
    for (std::size_t i = 0; i < n; ++i) {
      const double* ai = a.row(i).data();
      for (std::size_t k = 0; k < o; ++k) {
        const double d = delta(i, k);
        if (d == 0.0) continue;
        double* gwk = gw + k * in;
        for (std::size_t j = 0; j < in; ++j) gwk[j] += d * ai[j];
        gb[k] += d;
      }
    }
    if (l == 0) break;
    Matrix prev(n, in, 0.0);
    const Matrix& z = tape.pre[l - 1];
    for (std::size_t i = 0; i < n; ++i) {
      double* pi = prev.row(i).data();
      for (std::size_t k = 0; k < o; ++k) {
        const double d = delta(i, k);
        if (d == 0.0) continue;
        const double* wk = w + k * in;
        for (std::size_t j = 0; j < in; ++j) pi[j] += d * wk[j];
      }
      for (std::size_t j = 0; j < in; ++j) pi[j] *= activate_deriv(arch.activation, z(i, j), a(i, j));
    }
    delta = std::move(prev);
  }
  return grad;
}

Vector backward(const MlpModel& model, const Matrix& x, const Matrix& grad_out) {
  return backward(model, forward_tape(model, x), grad_out);
}

MlpModel shrink_last_layer(const MlpModel& model, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InvalidParameter("shrink factor V must be positive");
  const auto& arch = model.architecture();
  Vector theta = model.theta();
  for (std::size_t k = arch.layer_offset(arch.num_layers() - 1); k < theta.size(); ++k) theta[k] /= v;
  return MlpModel(arch, std::move(theta));
}

double param_norm_sq(const MlpModel& model) { return norm_sq(model.theta()); }

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

nlohmann::json architecture_json(const MlpArchitecture& arch) {
  return {{"input_dim", arch.input_dim},
          {"hidden_dims", arch.hidden_dims},
          {"output_dim", arch.output_dim},
          {"activation", std::string(to_string(arch.activation))}};
}

}  // namespace

std::string checkpoint_to_json(const MlpModel& model) {
  std::ostringstream out;
  out << "{\"architecture\": " << architecture_json(model.architecture()).dump() << ", \"theta\": [";
  const auto& theta = model.theta();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (i) out << ", ";
    out << format_double(theta[i]);
  }
  out << "]}\n";
  return out.str();
}

MlpModel checkpoint_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    const auto& a = doc.at("architecture");
    MlpArchitecture arch;
    arch.input_dim = a.at("input_dim").get<std::size_t>();
    arch.hidden_dims = a.at("hidden_dims").get<std::vector<std::size_t>>();
    arch.output_dim = a.at("output_dim").get<std::size_t>();
    arch.activation = activation_from_string(a.at("activation").get<std::string>());
    return MlpModel(arch, doc.at("theta").get<Vector>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0, 0);
  }
}

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << checkpoint_to_json(model);
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace gulf
