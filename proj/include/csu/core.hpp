#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "csu/matrix.hpp"

namespace csu {

/// Raised for malformed or invalid dataset input. Carries the 1-based line
/// number when the problem is tied to a file row.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

enum class Split { Train, Valid, Test };

std::string_view to_string(Split split);

/// Strongly typed class index, checked against the class count on creation.
class ClassIndex {
public:
  ClassIndex(std::size_t value, std::size_t num_classes);
  std::size_t value() const noexcept { return value_; }
  operator std::size_t() const noexcept { return value_; }

private:
  std::size_t value_;
};

struct DatasetBundle {
  Matrix features;  // N x D
  Matrix targets;   // N x C, entries in [0, 1]
  Split split = Split::Train;
  std::vector<std::string> class_names;
  std::vector<std::uint64_t> sample_ids;

  std::size_t num_samples() const noexcept { return features.rows(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }
  std::size_t num_classes() const noexcept { return targets.cols(); }

  /// Checks every type invariant; throws DataError on the first violation.
  void validate() const;
};

struct SplitBundles {
  DatasetBundle train;
  DatasetBundle valid;
  DatasetBundle test;
};

struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t feature_dim = 32;
  std::size_t train_per_class = 80;
  std::size_t valid_per_class = 10;
  std::size_t test_per_class = 10;
  double noise_scale = 0.5;
  double cooccurrence_prob = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<std::string> default_class_names(std::size_t num_classes);

/// Unit-norm class prototypes (C x D). Orthonormal when C <= D.
Matrix class_prototypes(std::size_t num_classes, std::size_t feature_dim, std::uint64_t seed);

/// Class-balanced train/valid/test splits drawn around seeded prototypes.
SplitBundles generate_synthetic(const SynthSpec& spec);

/// True when every entry is exactly 0 or 1.
bool is_hard(const Matrix& targets);

/// Lowest-index column holding the row maximum, or -1 for an all-zero row.
int dominant_class(std::span<const double> row);

/// Entries >= 0.5 become 1, all others 0.
Matrix binarize(const Matrix& targets);

DatasetBundle load_feature_csv(const std::filesystem::path& path, Split split = Split::Train);
void write_feature_csv(const std::filesystem::path& path, const DatasetBundle& bundle);

}  // namespace csu
