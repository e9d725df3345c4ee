#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gulf/data.hpp"
#include "gulf/diagnostics.hpp"
#include "gulf/losses.hpp"
#include "gulf/models.hpp"
#include "gulf/trainers.hpp"
#include "json.hpp"

namespace gulf {

enum class Method { kBase, kBaseLoop, kBaseLambdaAlpha, kLabelSmooth, kGulf1, kGulf2 };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);
bool is_gulf_method(Method m) noexcept;

struct CsvSource {
  std::string train_path;
  std::string test_path;
  std::string label_column = "label";
  bool standardize = true;
  bool operator==(const CsvSource&) const = default;
};

// Exactly one of the two is set.
struct DatasetSource {
  std::optional<CsvSource> csv;
  std::optional<SyntheticSpec> synthetic;
  bool operator==(const DatasetSource&) const = default;
};

struct ExperimentConfig {
  Method method = Method::kBase;
  DatasetSource dataset;
  // input_dim / output_dim of 0 are filled in from the data.
  MlpArchitecture architecture{0, {}, 0, Activation::kRelu};
  LossKind loss = LossKind::kCrossEntropy;
  SgdConfig sgd;
  GulfConfig gulf;                      // gulf1 / gulf2; gulf.sgd mirrors `sgd`
  std::size_t base_loop_stages = 1;     // base-loop
  double base_lambda_alpha = 0.3;       // base-lambda-alpha
  double label_smoothing = 0.1;         // label-smooth
  std::optional<std::string> base_checkpoint;  // ini:base and ini:base/V
  std::string output_dir;
  std::vector<std::uint64_t> seeds{0};

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

struct LoadedData {
  Dataset train;
  Dataset test;
};
LoadedData load_dataset(const DatasetSource& source);

// Fills in architecture dimensions from the data and the loss.
MlpArchitecture resolve_architecture(const ExperimentConfig& config, const Dataset& train);

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  StageTrajectory trajectory;
  double final_test_error = 0.0;
  double best_test_error = 0.0;
  std::size_t best_stage = 0;
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  double median_final_test_error = 0.0;
  double median_best_test_error = 0.0;
  nlohmann::json summary;
};

struct RunOptions {
  bool force = false;
};

// Trains every seed and writes, under config.output_dir:
//   config.json, summary.json and per seed seed_<s>/stage_<t>.json,
//   seed_<s>/trajectory.csv (and seed_<s>/base.json when a base model is trained).
// Refuses to touch an existing non-empty directory unless options.force is set.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

double median(std::vector<double> values);

}  // namespace gulf
