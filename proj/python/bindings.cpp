#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "gulf/bregman.hpp"
#include "gulf/diagnostics.hpp"
#include "gulf/errors.hpp"
#include "gulf/experiment.hpp"
#include "gulf/verify.hpp"

namespace py = pybind11;
using namespace gulf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Vector to_vector(const Array& a) {
  if (a.ndim() != 1) throw InvalidDimension("expected a 1-d array");
  return Vector(a.data(), a.data() + a.size());
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw InvalidDimension("expected a 2-d array");
  return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                Vector(a.data(), a.data() + a.size()));
}

Array from_vector(const Vector& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Array from_matrix(const Matrix& m) {
  Array out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

LossFn make_loss(const std::string& kind, std::size_t num_classes) {
  return LossFn(loss_kind_from_string(kind), num_classes);
}

BregmanGenerator make_generator(const std::string& kind, const LossFn& loss, int label) {
  if (kind == "half-squared-norm") return BregmanGenerator::half_squared_norm();
  if (kind == "loss") return BregmanGenerator::loss_as_generator(loss, label);
  throw InvalidParameter("generator must be 'half-squared-norm' or 'loss'");
}

Dataset make_dataset(const Array& x, const std::vector<int>& labels, std::size_t num_classes) {
  Dataset d{to_matrix(x), labels, num_classes, {}};
  d.validate();
  return d;
}

py::tuple dataset_tuple(const Dataset& d) { return py::make_tuple(from_matrix(d.features), d.labels); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core routines of the gulf_opt toolkit";

  py::register_exception<Error>(m, "GulfError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("stable_softmax", [](const Array& u) { return from_vector(stable_softmax(to_vector(u))); });
  m.def("log_sum_exp", [](const Array& u) { return log_sum_exp(to_vector(u)); });

  m.def("loss_value", [](const std::string& kind, std::size_t k, const Array& f, int y) {
    return make_loss(kind, k).value(to_vector(f), y);
  }, py::arg("kind"), py::arg("num_classes"), py::arg("f"), py::arg("label"));
  m.def("loss_grad", [](const std::string& kind, std::size_t k, const Array& f, int y) {
    return from_vector(make_loss(kind, k).grad(to_vector(f), y));
  }, py::arg("kind"), py::arg("num_classes"), py::arg("f"), py::arg("label"));

  m.def("bregman", [](const std::string& generator, const Array& u, const Array& v, const std::string& loss,
                      int label) {
    const Vector uu = to_vector(u);
    const LossFn l = make_loss(loss, uu.size());
    return bregman(make_generator(generator, l, label), uu, to_vector(v));
  }, py::arg("generator"), py::arg("u"), py::arg("v"), py::arg("loss") = "cross-entropy", py::arg("label") = 0);

  m.def("guide_step_l2", [](const Array& f, int y, const std::string& loss, double alpha, std::size_t steps) {
    const Vector ff = to_vector(f);
    return from_vector(guide_step_l2(ff, y, make_loss(loss, ff.size()), alpha, steps));
  }, py::arg("f"), py::arg("label"), py::arg("loss"), py::arg("alpha"), py::arg("m") = 1);
  m.def("guide_step_loss_generator", [](const Array& f, int y, double alpha, std::size_t steps) {
    const Vector ff = to_vector(f);
    return from_vector(guide_step_loss_generator(ff, y, LossFn::cross_entropy(ff.size()), alpha, steps));
  }, py::arg("f"), py::arg("label"), py::arg("alpha"), py::arg("m") = 1);
  m.def("guide_step_mirror_exact", [](const std::string& generator, const Array& f, int y, const std::string& loss,
                                      double alpha) {
    const Vector ff = to_vector(f);
    const LossFn l = make_loss(loss, ff.size());
    return from_vector(guide_step_mirror_exact(make_generator(generator, l, y), ff, y, l, alpha));
  }, py::arg("generator"), py::arg("f"), py::arg("label"), py::arg("loss"), py::arg("alpha"));

  m.def("checkpoint_forward", [](const std::string& path, const Array& x) {
    return from_matrix(forward(load_checkpoint(path), to_matrix(x)));
  }, py::arg("checkpoint"), py::arg("x"));
  m.def("checkpoint_evaluate", [](const std::string& path, const Array& x, const std::vector<int>& labels,
                                  const std::string& loss) {
    const MlpModel model = load_checkpoint(path);
    const std::size_t k = model.architecture().output_dim == 1 ? 2 : model.architecture().output_dim;
    const Evaluation e = evaluate(model, make_dataset(x, labels, k), make_loss(loss, k));
    return py::make_tuple(e.mean_loss, e.error_rate);
  }, py::arg("checkpoint"), py::arg("x"), py::arg("labels"), py::arg("loss") = "cross-entropy");
  m.def("ensemble_predict", [](const std::vector<std::string>& paths, const Array& x) {
    std::vector<MlpModel> models;
    for (const auto& p : paths) models.push_back(load_checkpoint(p));
    return from_matrix(ensemble_predict(models, to_matrix(x)));
  }, py::arg("checkpoints"), py::arg("x"));

  m.def("gen_synthetic", [](const std::string& spec_json) {
    const ExperimentConfig c = config_from_json(
        {{"method", "base"}, {"dataset", {{"synthetic", nlohmann::json::parse(spec_json)}}}, {"output_dir", "-"}});
    const SyntheticData d = gen_synthetic(*c.dataset.synthetic);
    return py::make_tuple(dataset_tuple(d.train), dataset_tuple(d.test));
  }, py::arg("spec_json"));

  m.def("run_experiment", [](const std::string& config_json, bool force) {
    const ExperimentConfig c = config_from_json(nlohmann::json::parse(config_json));
    ExperimentResult r;
    {
      py::gil_scoped_release release;
      r = run_experiment(c, {force});
    }
    return r.summary.dump();
  }, py::arg("config_json"), py::arg("force") = false);

  m.def("verify_suites", &verify_suites);
  m.def("run_verify", [](const std::string& suite, std::uint64_t seed) {
    VerifyReport r;
    {
      py::gil_scoped_release release;
      r = run_verify(suite, seed);
    }
    return r.to_json().dump();
  }, py::arg("suite"), py::arg("seed") = 0);
}
