#include "gulf/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gulf/errors.hpp"

namespace gulf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kBase: return "base";
    case Method::kBaseLoop: return "base-loop";
    case Method::kBaseLambdaAlpha: return "base-lambda-alpha";
    case Method::kLabelSmooth: return "label-smooth";
    case Method::kGulf1: return "gulf1";
    case Method::kGulf2: return "gulf2";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  for (Method m : {Method::kBase, Method::kBaseLoop, Method::kBaseLambdaAlpha, Method::kLabelSmooth,
                   Method::kGulf1, Method::kGulf2}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

bool is_gulf_method(Method m) noexcept { return m == Method::kGulf1 || m == Method::kGulf2; }

void ExperimentConfig::validate() const {
  if (dataset.csv.has_value() == dataset.synthetic.has_value()) {
    throw ConfigError("dataset needs exactly one of 'csv' or 'synthetic'");
  }
  if (dataset.synthetic) dataset.synthetic->validate();
  sgd.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  for (std::size_t h : architecture.hidden_dims) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  }
  switch (method) {
    case Method::kBaseLoop:
      if (base_loop_stages < 1) throw ConfigError("base-loop needs stages >= 1");
      break;
    case Method::kBaseLambdaAlpha:
      if (!(base_lambda_alpha > 0.0 && base_lambda_alpha <= 1.0)) {
        throw ConfigError("base-lambda-alpha needs alpha in (0, 1]");
      }
      break;
    case Method::kLabelSmooth:
      if (loss != LossKind::kCrossEntropy) throw ConfigError("label smoothing needs cross-entropy");
      if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
      break;
    case Method::kGulf1:
    case Method::kGulf2:
      gulf.validate();
      break;
    case Method::kBase:
      break;
  }
}

namespace {

template <typename T>
T required(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ConfigError(std::string("missing required field '") + key + "'");
  return doc.at(key).get<T>();
}

SyntheticSpec synthetic_from_json(const json& j) {
  SyntheticSpec s;
  s.generator = synthetic_generator_from_string(j.value("generator", std::string("gaussian-blobs")));
  s.num_classes = j.value("num_classes", s.num_classes);
  s.examples_per_class = j.value("examples_per_class", s.examples_per_class);
  s.test_examples_per_class = j.value("test_examples_per_class", s.test_examples_per_class);
  s.input_dim = j.value("input_dim", s.input_dim);
  s.class_separation = j.value("class_separation", s.class_separation);
  s.label_noise = j.value("label_noise", s.label_noise);
  s.seed = j.value("seed", s.seed);
  return s;
}

json synthetic_to_json(const SyntheticSpec& s) {
  return {{"generator", std::string(to_string(s.generator))},
          {"num_classes", s.num_classes},
          {"examples_per_class", s.examples_per_class},
          {"test_examples_per_class", s.test_examples_per_class},
          {"input_dim", s.input_dim},
          {"class_separation", s.class_separation},
          {"label_noise", s.label_noise},
          {"seed", s.seed}};
}

SgdConfig sgd_from_json(const json& j) {
  SgdConfig c;
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("schedule")) {
    c.schedule.clear();
    for (const auto& seg : j.at("schedule")) {
      c.schedule.push_back({seg.at("epochs").get<std::size_t>(), seg.at("lr_multiplier").get<double>()});
    }
  }
  return c;
}

json sgd_to_json(const SgdConfig& c) {
  json schedule = json::array();
  for (const auto& seg : c.schedule) schedule.push_back({{"epochs", seg.epochs}, {"lr_multiplier", seg.lr_multiplier}});
  return {{"lr", c.lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"schedule", schedule},
          {"seed", c.seed}};
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  try {
    ExperimentConfig c;
    c.method = method_from_string(required<std::string>(doc, "method"));
    c.loss = loss_kind_from_string(doc.value("loss", std::string("cross-entropy")));

    const json& ds = doc.at("dataset");
    if (ds.contains("csv")) {
      const json& j = ds.at("csv");
      CsvSource csv;
      csv.train_path = required<std::string>(j, "train");
      csv.test_path = required<std::string>(j, "test");
      csv.label_column = j.value("label_column", csv.label_column);
      csv.standardize = j.value("standardize", csv.standardize);
      c.dataset.csv = csv;
    }
    if (ds.contains("synthetic")) c.dataset.synthetic = synthetic_from_json(ds.at("synthetic"));

    if (doc.contains("architecture")) {
      const json& a = doc.at("architecture");
      c.architecture.input_dim = a.value("input_dim", std::size_t{0});
      c.architecture.hidden_dims = a.value("hidden_dims", std::vector<std::size_t>{});
      c.architecture.output_dim = a.value("output_dim", std::size_t{0});
      c.architecture.activation = activation_from_string(a.value("activation", std::string("relu")));
    }
    if (doc.contains("sgd")) c.sgd = sgd_from_json(doc.at("sgd"));

    if (doc.contains("gulf")) {
      const json& g = doc.at("gulf");
      if (is_gulf_method(c.method)) {
        if (!g.contains("alpha") || !g.contains("stages")) throw ConfigError("gulf methods require alpha and stages");
      }
      c.gulf.alpha = g.value("alpha", c.gulf.alpha);
      c.gulf.m = g.value("m", c.gulf.m);
      c.gulf.stages = g.value("stages", c.gulf.stages);
      c.gulf.init = init_strategy_from_string(g.value("init", std::string("ini:random")));
      c.gulf.shrink_v = g.value("shrink_v", c.gulf.shrink_v);
    } else if (is_gulf_method(c.method)) {
      throw ConfigError("gulf methods require a 'gulf' block with alpha and stages");
    }
    c.gulf.generator = c.method == Method::kGulf1 ? GeneratorKind::kHalfSquaredNorm : GeneratorKind::kLossAsGenerator;
    c.gulf.sgd = c.sgd;

    if (doc.contains("base_loop")) c.base_loop_stages = doc.at("base_loop").value("stages", c.base_loop_stages);
    if (doc.contains("base_lambda_alpha")) {
      c.base_lambda_alpha = doc.at("base_lambda_alpha").value("alpha", c.base_lambda_alpha);
    }
    if (doc.contains("label_smoothing")) {
      c.label_smoothing = doc.at("label_smoothing").value("epsilon", c.label_smoothing);
    }
    if (doc.contains("base_checkpoint") && !doc.at("base_checkpoint").is_null()) {
      c.base_checkpoint = doc.at("base_checkpoint").get<std::string>();
    }
    c.output_dir = doc.value("output_dir", std::string());
    if (doc.contains("seeds")) c.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json config_to_json(const ExperimentConfig& c) {
  json ds;
  if (c.dataset.csv) {
    ds["csv"] = {{"train", c.dataset.csv->train_path},
                 {"test", c.dataset.csv->test_path},
                 {"label_column", c.dataset.csv->label_column},
                 {"standardize", c.dataset.csv->standardize}};
  }
  if (c.dataset.synthetic) ds["synthetic"] = synthetic_to_json(*c.dataset.synthetic);
  json doc = {
      {"method", std::string(to_string(c.method))},
      {"loss", std::string(to_string(c.loss))},
      {"dataset", ds},
      {"architecture",
       {{"input_dim", c.architecture.input_dim},
        {"hidden_dims", c.architecture.hidden_dims},
        {"output_dim", c.architecture.output_dim},
        {"activation", std::string(to_string(c.architecture.activation))}}},
      {"sgd", sgd_to_json(c.sgd)},
      {"gulf",
       {{"alpha", c.gulf.alpha},
        {"m", c.gulf.m},
        {"stages", c.gulf.stages},
        {"init", std::string(to_string(c.gulf.init))},
        {"shrink_v", c.gulf.shrink_v}}},
      {"base_loop", {{"stages", c.base_loop_stages}}},
      {"base_lambda_alpha", {{"alpha", c.base_lambda_alpha}}},
      {"label_smoothing", {{"epsilon", c.label_smoothing}}},
      {"output_dir", c.output_dir},
      {"seeds", c.seeds}};
  doc["base_checkpoint"] = c.base_checkpoint ? json(*c.base_checkpoint) : json(nullptr);
  return doc;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

LoadedData load_dataset(const DatasetSource& source) {
  if (source.synthetic) {
    SyntheticData d = gen_synthetic(*source.synthetic);
    return {std::move(d.train), std::move(d.test)};
  }
  if (!source.csv) throw ConfigError("no dataset source configured");
  auto [train, test] =
      load_csv_split(source.csv->train_path, source.csv->test_path, source.csv->label_column, source.csv->standardize);
  return {std::move(train), std::move(test)};
}

MlpArchitecture resolve_architecture(const ExperimentConfig& config, const Dataset& train) {
  MlpArchitecture arch = config.architecture;
  if (arch.input_dim == 0) arch.input_dim = train.input_dim();
  const LossFn loss(config.loss, train.num_classes);
  if (arch.output_dim == 0) arch.output_dim = loss.output_dim();
  if (arch.input_dim != train.input_dim()) throw ConfigError("architecture input_dim does not match the data");
  if (arch.output_dim != loss.output_dim()) throw ConfigError("architecture output_dim does not match the loss");
  arch.validate();
  return arch;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
}

json record_json(const StageRecord& r) {
  return {{"stage", r.stage},
          {"train_loss", r.train_loss},
          {"test_loss", r.test_loss},
          {"train_err", r.train_error},
          {"test_err", r.test_error},
          {"reg_alpha_loss", r.reg_alpha_loss},
          {"param_norm_sq", r.param_norm_sq}};
}

double trajectory_alpha(const ExperimentConfig& c) {
  if (is_gulf_method(c.method)) return c.gulf.alpha;
  if (c.method == Method::kBaseLambdaAlpha) return c.base_lambda_alpha;
  return 1.0;
}

SeedResult run_seed(const ExperimentConfig& config, const LoadedData& data, const MlpArchitecture& arch,
                    std::uint64_t seed, const fs::path& dir, json& seed_summary) {
  SeedResult result;
  result.seed = seed;
  SgdConfig sgd = config.sgd;
  sgd.seed = seed;
  const LossFn loss(config.loss, data.train.num_classes);
  const double alpha = trajectory_alpha(config);
  fs::create_directories(dir);

  std::vector<MlpModel> checkpoints;
  std::optional<MlpModel> initial;
  switch (config.method) {
    case Method::kBase:
      checkpoints.push_back(train_regular(data.train, arch, loss, sgd));
      break;
    case Method::kBaseLoop: {
      const MlpModel start = init_random(arch, RngStream(seed).child(kInitStreamDomain));
      initial = start;
      checkpoints = base_loop(data.train, start, loss, sgd, config.base_loop_stages);
      break;
    }
    case Method::kBaseLambdaAlpha:
      checkpoints.push_back(train_base_lambda_alpha(data.train, arch, loss, sgd, config.base_lambda_alpha));
      break;
    case Method::kLabelSmooth:
      checkpoints.push_back(train_label_smoothing(data.train, arch, sgd, config.label_smoothing));
      break;
    case Method::kGulf1:
    case Method::kGulf2: {
      GulfConfig gulf = config.gulf;
      gulf.sgd = sgd;
      std::optional<MlpModel> base;
      if (gulf.init != InitStrategy::kRandom) {
        if (config.base_checkpoint) {
          base = load_checkpoint(*config.base_checkpoint);
        } else {
          base = train_regular(data.train, arch, loss, sgd);
          save_checkpoint(*base, dir / "base.json");
        }
        const Evaluation be = evaluate(*base, data.test, loss);
        seed_summary["base"] = {{"test_loss", be.mean_loss}, {"test_err", be.error_rate}};
      }
      initial = gulf_initial_model(arch, gulf, base);
      checkpoints = gulf_train(data.train, arch, loss, gulf, base);
      break;
    }
  }

  for (std::size_t t = 0; t < checkpoints.size(); ++t) {
    save_checkpoint(checkpoints[t], dir / ("stage_" + std::to_string(t + 1) + ".json"));
  }
  result.trajectory = record_trajectory(checkpoints, data.train, data.test, loss, sgd.weight_decay, alpha);
  write_trajectory_csv(result.trajectory, dir / "trajectory.csv");

  const auto& recs = result.trajectory.records;
  const auto best = std::min_element(recs.begin(), recs.end(), [](const StageRecord& a, const StageRecord& b) {
    return a.test_error < b.test_error;
  });
  result.final_test_error = recs.back().test_error;
  result.best_test_error = best->test_error;
  result.best_stage = best->stage;
  result.ok = true;

  seed_summary["final_test_err"] = result.final_test_error;
  seed_summary["final_test_loss"] = recs.back().test_loss;
  seed_summary["final_train_loss"] = recs.back().train_loss;
  seed_summary["best_stage"] = result.best_stage;
  seed_summary["best_test_err"] = result.best_test_error;
  if (initial) {
    const std::vector<MlpModel> first{*initial};
    seed_summary["initial"] =
        record_json(record_trajectory(first, data.train, data.test, loss, sgd.weight_decay, alpha, 0).records[0]);
  }
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const fs::path out(config.output_dir);
  if (fs::exists(out)) {
    const bool empty = fs::is_directory(out) && fs::is_empty(out);
    if (!empty && !options.force) {
      throw ConfigError("output directory " + out.string() + " exists; pass --force to overwrite");
    }
    if (!empty) fs::remove_all(out);
  }
  fs::create_directories(out);
  write_text(out / "config.json", config_to_json(config).dump(2) + "\n");

  const LoadedData data = load_dataset(config.dataset);
  data.train.validate();
  const MlpArchitecture arch = resolve_architecture(config, data.train);

  ExperimentResult result;
  json seeds = json::array();
  std::vector<double> finals, bests;
  for (std::uint64_t seed : config.seeds) {
    json entry = {{"seed", seed}};
    try {
      SeedResult r = run_seed(config, data, arch, seed, out / ("seed_" + std::to_string(seed)), entry);
      entry["status"] = "ok";
      finals.push_back(r.final_test_error);
      bests.push_back(r.best_test_error);
      result.seeds.push_back(std::move(r));
    } catch (const Error& e) {
      entry["status"] = "failed";
      entry["error"] = e.what();
      SeedResult r;
      r.seed = seed;
      r.error = e.what();
      result.seeds.push_back(std::move(r));
    }
    seeds.push_back(entry);
  }
  result.median_final_test_error = median(finals);
  result.median_best_test_error = median(bests);
  result.summary = {{"method", std::string(to_string(config.method))},
                    {"seeds", seeds},
                    {"completed", finals.size()},
                    {"failed", config.seeds.size() - finals.size()},
                    {"median_final_test_err", result.median_final_test_error},
                    {"median_best_test_err", result.median_best_test_error}};
  write_text(out / "summary.json", result.summary.dump(2) + "\n");
  return result;
}

}  // namespace gulf
