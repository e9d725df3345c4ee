#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gulf/diagnostics.hpp"
#include "gulf/errors.hpp"
#include "gulf/experiment.hpp"
#include "gulf/verify.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* opt = cmd->add_option("--config", args.config, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--out", args.out, "output directory (overrides the config)");
  cmd->add_flag("--force", args.force, "replace an existing output directory");
  cmd->add_option("--seed", args.seed, "run a single seed instead of the configured list");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gulf::ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw gulf::ConfigError(path + ": " + e.what());
  }
}

gulf::ExperimentConfig load(const CommonArgs& args, bool need_method) {
  json doc = read_json(args.config);
  if (!need_method && !doc.contains("method")) doc["method"] = "base";
  gulf::ExperimentConfig cfg = gulf::config_from_json(doc);
  if (!args.out.empty()) cfg.output_dir = args.out;
  if (args.seed) cfg.seeds = {*args.seed};
  return cfg;
}

void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    if (!force) throw gulf::ConfigError("output directory " + dir.string() + " exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gulf::InvalidInput("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

int run(const CommonArgs& args, bool gulf_only) {
  const gulf::ExperimentConfig cfg = load(args, true);
  if (gulf_only && !gulf::is_gulf_method(cfg.method)) {
    throw gulf::ConfigError("the gulf subcommand needs method gulf1 or gulf2");
  }
  const gulf::ExperimentResult result = gulf::run_experiment(cfg, {args.force});
  std::cout << result.summary.dump(2) << "\n";
  for (const auto& s : result.seeds) {
    if (!s.ok) return 1;
  }
  return 0;
}

int eval(const CommonArgs& args, const std::vector<std::string>& checkpoints) {
  if (checkpoints.empty()) throw gulf::ConfigError("eval needs at least one --checkpoint");
  const gulf::ExperimentConfig cfg = load(args, false);
  const gulf::LoadedData data = gulf::load_dataset(cfg.dataset);
  const gulf::LossFn loss(cfg.loss, data.train.num_classes);
  json rows = json::array();
  for (const auto& path : checkpoints) {
    const gulf::MlpModel model = gulf::load_checkpoint(path);
    const gulf::Evaluation train = gulf::evaluate(model, data.train, loss);
    const gulf::Evaluation test = gulf::evaluate(model, data.test, loss);
    rows.push_back({{"checkpoint", path},
                    {"train_loss", train.mean_loss},
                    {"train_err", train.error_rate},
                    {"test_loss", test.mean_loss},
                    {"test_err", test.error_rate},
                    {"param_norm_sq", gulf::param_norm_sq(model)}});
  }
  const json doc = {{"evaluations", rows}};
  if (!args.out.empty()) {
    prepare_dir(args.out, args.force);
    write_json(fs::path(args.out) / "eval.json", doc);
  }
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int ensemble(const CommonArgs& args, const std::vector<std::string>& checkpoints) {
  if (checkpoints.empty()) throw gulf::ConfigError("ensemble needs at least one --checkpoint");
  const gulf::ExperimentConfig cfg = load(args, false);
  if (cfg.loss != gulf::LossKind::kCrossEntropy) throw gulf::ConfigError("ensembling averages softmax outputs");
  const gulf::LoadedData data = gulf::load_dataset(cfg.dataset);
  std::vector<gulf::MlpModel> models;
  for (const auto& path : checkpoints) models.push_back(gulf::load_checkpoint(path));
  const json doc = {{"members", checkpoints.size()},
                    {"train_err", gulf::ensemble_error(models, data.train)},
                    {"test_err", gulf::ensemble_error(models, data.test)}};
  if (!args.out.empty()) {
    prepare_dir(args.out, args.force);
    write_json(fs::path(args.out) / "ensemble.json", doc);
  }
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int gen_data(const CommonArgs& args) {
  gulf::ExperimentConfig cfg = load(args, false);
  if (!cfg.dataset.synthetic) throw gulf::ConfigError("gen-data needs a synthetic dataset spec");
  if (args.seed) cfg.dataset.synthetic->seed = *args.seed;
  const fs::path dir = args.out.empty() ? fs::path(cfg.output_dir) : fs::path(args.out);
  if (dir.empty()) throw gulf::ConfigError("gen-data needs --out or output_dir");
  const gulf::SyntheticData data = gulf::gen_synthetic(*cfg.dataset.synthetic);
  prepare_dir(dir, args.force);
  gulf::write_csv_dataset(data.train, dir / "train.csv");
  gulf::write_csv_dataset(data.test, dir / "test.csv");
  std::cout << json{{"train", (dir / "train.csv").string()},
                    {"test", (dir / "test.csv").string()},
                    {"train_rows", data.train.size()},
                    {"test_rows", data.test.size()}}
                   .dump(2)
            << "\n";
  return 0;
}

int verify(const CommonArgs& args, const std::string& suite) {
  const std::uint64_t seed = args.seed.value_or(0);
  std::vector<std::string> names;
  if (suite == "all") {
    names = gulf::verify_suites();
  } else {
    names = {suite};
  }
  json reports = json::array();
  bool ok = true;
  for (const auto& name : names) {
    const gulf::VerifyReport r = gulf::run_verify(name, seed);
    ok = ok && r.passed();
    reports.push_back(r.to_json());
  }
  const json doc = {{"passed", ok}, {"reports", reports}};
  if (!args.out.empty()) {
    prepare_dir(args.out, args.force);
    write_json(fs::path(args.out) / "verify.json", doc);
  }
  std::cout << doc.dump(2) << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gulf-opt: guided functional-gradient training and verification"};
  app.require_subcommand(1);

  CommonArgs train_args, gulf_args, eval_args, ens_args, gen_args, verify_args;
  std::vector<std::string> eval_ckpts, ens_ckpts;
  std::string suite;

  auto* train = app.add_subcommand("train", "train base, base-loop, base-lambda-alpha or label-smooth models");
  add_common(train, train_args, true);
  auto* gulf_cmd = app.add_subcommand("gulf", "run gulf1 or gulf2");
  add_common(gulf_cmd, gulf_args, true);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints on the configured dataset");
  add_common(eval_cmd, eval_args, true);
  eval_cmd->add_option("--checkpoint", eval_ckpts, "checkpoint JSON (repeatable)")->required();
  auto* ens_cmd = app.add_subcommand("ensemble", "softmax-averaged ensemble of checkpoints");
  add_common(ens_cmd, ens_args, true);
  ens_cmd->add_option("--checkpoint", ens_ckpts, "checkpoint JSON (repeatable)")->required();
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset as train.csv and test.csv");
  add_common(gen_cmd, gen_args, true);
  auto* verify_cmd = app.add_subcommand("verify", "run a numerical verification suite");
  add_common(verify_cmd, verify_args, false);
  verify_cmd->add_option("suite", suite, "gradients, prop21, prop22, theorem21, bregman or all")
      ->required()
      ->check(CLI::IsMember({"gradients", "prop21", "prop22", "theorem21", "bregman", "all"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run(train_args, false);
    if (*gulf_cmd) return run(gulf_args, true);
    if (*eval_cmd) return eval(eval_args, eval_ckpts);
    if (*ens_cmd) return ensemble(ens_args, ens_ckpts);
    if (*gen_cmd) return gen_data(gen_args);
    if (*verify_cmd) return verify(verify_args, suite);
  } catch (const gulf::ConfigError& e) {
    std::cerr << "gulf-opt: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "gulf-opt: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
