#include "gulf/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "gulf/errors.hpp"
#include "gulf/models.hpp"

namespace gulf {

void Dataset::validate() const {
  if (features.rows() != labels.size()) throw InvalidInput("one label per feature row required");
  if (num_classes < 2) throw InvalidInput("a dataset needs at least 2 classes");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw InvalidLabel("label out of range");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features.gather_rows(rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels[r]);
  out.num_classes = num_classes;
  out.class_names = class_names;
  return out;
}

ColumnStats column_stats(const Matrix& x) {
  ColumnStats s{Vector(x.cols(), 0.0), Vector(x.cols(), 0.0)};
  if (x.rows() == 0) throw InvalidInput("column statistics of an empty matrix");
  const double n = static_cast<double>(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) s.mean[j] += x(i, j);
  }
  for (double& m : s.mean) m /= n;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double d = x(i, j) - s.mean[j];
      s.std_dev[j] += d * d;
    }
  }
  for (double& v : s.std_dev) v = std::max(std::sqrt(v / n), 1e-12);
  return s;
}

void standardize(Matrix& x, const ColumnStats& stats) {
  if (stats.mean.size() != x.cols()) throw InvalidDimension("statistics width mismatch");
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = (x(i, j) - stats.mean[j]) / stats.std_dev[j];
  }
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

struct RawCsv {
  Matrix features;
  std::vector<std::string> labels;
};

RawCsv read_raw_csv(const std::filesystem::path& path, std::string_view label_column) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header row", 0, 0);
  const auto header = split_fields(line);
  const auto it = std::find(header.begin(), header.end(), label_column);
  if (it == header.end()) {
    throw ParseError(path.string() + ": no column named '" + std::string(label_column) + "'", 0, 0);
  }
  const auto label_idx = static_cast<std::size_t>(it - header.begin());
  RawCsv raw;
  Vector values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError(path.string() + ": row " + std::to_string(row) + " has " +
                           std::to_string(fields.size()) + " fields, header has " +
                           std::to_string(header.size()),
                       row, fields.size());
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == label_idx) {
        raw.labels.push_back(fields[c]);
        continue;
      }
      double v = 0.0;
      if (!parse_number(fields[c], v)) {
        throw ParseError(path.string() + ": non-numeric cell '" + fields[c] + "' at row " +
                             std::to_string(row) + ", column " + std::to_string(c),
                         row, c);
      }
      values.push_back(v);
    }
  }
  const std::size_t width = header.size() - 1;
  raw.features = Matrix(raw.labels.size(), width, std::move(values));
  return raw;
}

std::vector<std::string> sorted_classes(const std::vector<std::string>& labels) {
  std::vector<std::string> names(labels.begin(), labels.end());
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  const bool numeric = std::all_of(names.begin(), names.end(), [](const std::string& s) {
    double v;
    return parse_number(s, v);
  });
  if (numeric) {
    std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      return std::strtod(a.c_str(), nullptr) < std::strtod(b.c_str(), nullptr);
    });
  }
  return names;
}

Dataset to_dataset(RawCsv raw, const std::vector<std::string>& classes, const std::string& source) {
  std::map<std::string, int> index;
  for (std::size_t k = 0; k < classes.size(); ++k) index[classes[k]] = static_cast<int>(k);
  Dataset d;
  d.features = std::move(raw.features);
  d.num_classes = classes.size();
  d.class_names = classes;
  for (std::size_t r = 0; r < raw.labels.size(); ++r) {
    const auto it = index.find(raw.labels[r]);
    if (it == index.end()) {
      throw ParseError(source + ": label '" + raw.labels[r] + "' at row " + std::to_string(r + 1) +
                           " does not occur in the training split",
                       r + 1, 0);
    }
    d.labels.push_back(it->second);
  }
  return d;
}

}  // namespace

Dataset load_csv_dataset(const std::filesystem::path& path, std::string_view label_column,
                         bool standardize_features) {
  RawCsv raw = read_raw_csv(path, label_column);
  const auto classes = sorted_classes(raw.labels);
  Dataset d = to_dataset(std::move(raw), classes, path.string());
  if (standardize_features && d.size() > 0) standardize(d.features, column_stats(d.features));
  return d;
}

std::pair<Dataset, Dataset> load_csv_split(const std::filesystem::path& train_path,
                                           const std::filesystem::path& test_path,
                                           std::string_view label_column,
                                           bool standardize_features) {
  RawCsv train_raw = read_raw_csv(train_path, label_column);
  RawCsv test_raw = read_raw_csv(test_path, label_column);
  if (test_raw.features.cols() != train_raw.features.cols()) {
    throw InvalidDimension("train and test CSVs have different widths");
  }
  const auto classes = sorted_classes(train_raw.labels);
  Dataset train = to_dataset(std::move(train_raw), classes, train_path.string());
  Dataset test = to_dataset(std::move(test_raw), classes, test_path.string());
  if (standardize_features && train.size() > 0) {
    const ColumnStats stats = column_stats(train.features);
    standardize(train.features, stats);
    standardize(test.features, stats);
  }
  return {std::move(train), std::move(test)};
}

void write_csv_dataset(const Dataset& data, const std::filesystem::path& path,
                       std::string_view label_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  for (std::size_t j = 0; j < data.input_dim(); ++j) out << "x" << j << ",";
  out << label_column << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.input_dim(); ++j) out << format_double(data.features(i, j)) << ",";
    out << data.labels[i] << "\n";
  }
}

std::string_view to_string(SyntheticGenerator g) {
  return g == SyntheticGenerator::kGaussianBlobs ? "gaussian-blobs" : "two-arcs";
}

SyntheticGenerator synthetic_generator_from_string(std::string_view name) {
  if (name == "gaussian-blobs") return SyntheticGenerator::kGaussianBlobs;
  if (name == "two-arcs") return SyntheticGenerator::kTwoArcs;
  throw InvalidParameter("unknown synthetic generator '" + std::string(name) + "'");
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw InvalidParameter("synthetic data needs at least 2 classes");
  if (examples_per_class < 1) throw InvalidParameter("examples_per_class must be >= 1");
  if (input_dim < 1) throw InvalidParameter("input_dim must be >= 1");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw InvalidParameter("label_noise must lie in [0, 0.5)");
  if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
    throw InvalidParameter("class_separation must be finite and >= 0");
  }
  if (generator == SyntheticGenerator::kTwoArcs) {
    if (num_classes != 2) throw InvalidParameter("two-arcs is a binary generator");
    if (input_dim < 2) throw InvalidParameter("two-arcs needs input_dim >= 2");
  }
}

namespace {

Dataset sample_split(const SyntheticSpec& spec, const Matrix& centers, std::size_t per_class,
                     RngStream stream) {
  const std::size_t n = per_class * spec.num_classes;
  Dataset d;
  d.features = Matrix(n, spec.input_dim);
  d.labels.resize(n);
  d.num_classes = spec.num_classes;
  // Interleave classes so that any prefix stays roughly balanced.
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<int>(i % spec.num_classes);
    d.labels[i] = y;
    auto row = d.features.row(i);
    if (spec.generator == SyntheticGenerator::kGaussianBlobs) {
      for (std::size_t j = 0; j < spec.input_dim; ++j) {
        row[j] = centers(static_cast<std::size_t>(y), j) + stream.next_normal();
      }
    } else {
      const double t = std::numbers::pi * stream.next_uniform();
      const double r = spec.class_separation;
      if (y == 0) {
        row[0] = r * std::cos(t);
        row[1] = r * std::sin(t);
      } else {
        row[0] = r * (1.0 - std::cos(t));
        row[1] = r * (0.5 - std::sin(t));
      }
      row[0] += stream.next_normal();
      row[1] += stream.next_normal();
      for (std::size_t j = 2; j < spec.input_dim; ++j) row[j] = stream.next_normal();
    }
  }
  return d;
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const RngStream root(spec.seed);
  Matrix centers(spec.num_classes, spec.input_dim);
  if (spec.generator == SyntheticGenerator::kGaussianBlobs) {
    RngStream cs = root.child(0);
    for (double& c : centers.data()) c = spec.class_separation * cs.next_normal();
  }
  SyntheticData out;
  out.train = sample_split(spec, centers, spec.examples_per_class, root.child(1));
  const std::size_t test_per_class =
      spec.test_examples_per_class ? spec.test_examples_per_class : spec.examples_per_class;
  out.test = sample_split(spec, centers, test_per_class, root.child(2));
  out.clean_train_labels = out.train.labels;
  RngStream noise = root.child(3);
  for (int& y : out.train.labels) {
    if (noise.next_uniform() < spec.label_noise) {
      auto other = static_cast<int>(noise.next_below(spec.num_classes - 1));
      if (other >= y) ++other;
      y = other;
    }
  }
  return out;
}

}  // namespace gulf
