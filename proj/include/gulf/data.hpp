#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gulf/numerics.hpp"

namespace gulf {

struct Dataset {
  Matrix features;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  // Original label spelling per class index (CSV data only).
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t input_dim() const noexcept { return features.cols(); }
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct ColumnStats {
  Vector mean;
  Vector std_dev;  // population std, floored at 1e-12
};

ColumnStats column_stats(const Matrix& x);
void standardize(Matrix& x, const ColumnStats& stats);

// Reads a CSV with a header row. The label column may hold any text; class
// indices follow the sorted distinct labels (numeric order when every label
// parses as a number). All other columns must be numeric.
Dataset load_csv_dataset(const std::filesystem::path& path, std::string_view label_column,
                         bool standardize_features);

// Train/test pair: the test split reuses the training label map and, when
// standardizing, the training column statistics.
std::pair<Dataset, Dataset> load_csv_split(const std::filesystem::path& train_path,
                                           const std::filesystem::path& test_path,
                                           std::string_view label_column,
                                           bool standardize_features);

void write_csv_dataset(const Dataset& data, const std::filesystem::path& path,
                       std::string_view label_column = "label");

enum class SyntheticGenerator { kGaussianBlobs, kTwoArcs };

std::string_view to_string(SyntheticGenerator g);
SyntheticGenerator synthetic_generator_from_string(std::string_view name);

struct SyntheticSpec {
  SyntheticGenerator generator = SyntheticGenerator::kGaussianBlobs;
  std::size_t num_classes = 2;
  std::size_t examples_per_class = 100;
  // Defaults to examples_per_class when zero.
  std::size_t test_examples_per_class = 0;
  std::size_t input_dim = 2;
  double class_separation = 3.0;
  double label_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SyntheticSpec&) const = default;
};

// Gaussian blobs: class centers drawn from N(0, separation^2 I), points from
// N(center, I). Two arcs (binary): interleaved half circles of radius
// `separation` in the first two coordinates with unit Gaussian noise; any
// further coordinates are pure N(0, 1) noise. Label noise flips each training
// label to a uniformly chosen other class; test labels stay clean.
struct SyntheticData {
  Dataset train;
  Dataset test;
  std::vector<int> clean_train_labels;
};
SyntheticData gen_synthetic(const SyntheticSpec& spec);

}  // namespace gulf
