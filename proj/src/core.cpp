#include "csu/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "csu/random.hpp"

namespace csu {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "unknown";
}

ClassIndex::ClassIndex(std::size_t value, std::size_t num_classes) : value_(value) {
  if (value >= num_classes) {
    throw std::out_of_range("class index " + std::to_string(value) + " out of range for " +
                            std::to_string(num_classes) + " classes");
  }
}

void DatasetBundle::validate() const {
  if (features.rows() == 0) throw DataError("empty dataset");
  if (features.cols() == 0) throw DataError("dataset has no feature columns");
  if (targets.rows() != features.rows())
    throw DataError("feature and target row counts differ");
  if (targets.cols() == 0) throw DataError("dataset has no target columns");
  if (!class_names.empty() && class_names.size() != targets.cols())
    throw DataError("class name count does not match target columns");
  if (!sample_ids.empty() && sample_ids.size() != features.rows())
    throw DataError("sample id count does not match rows");
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < features.cols(); ++c) {
      if (!std::isfinite(features(r, c)))
        throw DataError("non-finite feature at row " + std::to_string(r) + ", column f_" +
                        std::to_string(c));
    }
    for (std::size_t c = 0; c < targets.cols(); ++c) {
      const double y = targets(r, c);
      if (!(y >= 0.0 && y <= 1.0))
        throw DataError("target outside [0,1] at row " + std::to_string(r) + ", column y_" +
                        std::to_string(c));
    }
  }
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("SynthSpec: num_classes must be >= 2");
  if (feature_dim < 1) throw std::invalid_argument("SynthSpec: feature_dim must be >= 1");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
    throw std::invalid_argument("SynthSpec: noise_scale must be a nonnegative finite value");
  if (!(cooccurrence_prob >= 0.0 && cooccurrence_prob <= 1.0))
    throw std::invalid_argument("SynthSpec: cooccurrence_prob must lie in [0,1]");
  if (train_per_class == 0 || valid_per_class == 0 || test_per_class == 0)
    throw std::invalid_argument("SynthSpec: every split needs at least one sample per class");
}

std::vector<std::string> default_class_names(std::size_t num_classes) {
  std::vector<std::string> names;
  names.reserve(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) names.push_back("class_" + std::to_string(c));
  return names;
}

Matrix class_prototypes(std::size_t num_classes, std::size_t feature_dim, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0));
  Matrix proto(num_classes, feature_dim);
  for (double& v : proto.values()) v = rng.normal();

  // Modified Gram-Schmidt on the rows; rows beyond D cannot be orthogonal and
  // are only normalized.
  const std::size_t orthogonal = std::min(num_classes, feature_dim);
  for (std::size_t i = 0; i < num_classes; ++i) {
    auto ri = proto.row(i);
    if (i < orthogonal) {
      for (std::size_t j = 0; j < i; ++j) {
        auto rj = proto.row(j);
        double dot = 0.0;
        for (std::size_t k = 0; k < feature_dim; ++k) dot += ri[k] * rj[k];
        for (std::size_t k = 0; k < feature_dim; ++k) ri[k] -= dot * rj[k];
      }
    }
    double norm = 0.0;
    for (double v : ri) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : ri) v /= norm;
  }
  return proto;
}

namespace {

DatasetBundle make_split(const SynthSpec& spec, const Matrix& proto, Split split,
                         std::size_t per_class, std::uint64_t first_id, Rng& rng) {
  const std::size_t C = spec.num_classes;
  const std::size_t D = spec.feature_dim;
  DatasetBundle b;
  b.split = split;
  b.class_names = default_class_names(C);
  b.features = Matrix(C * per_class, D);
  b.targets = Matrix(C * per_class, C);
  b.sample_ids.resize(C * per_class);

  std::size_t r = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++r) {
      b.sample_ids[r] = first_id + r;
      auto x = b.features.row(r);
      auto p = proto.row(c);
      std::copy(p.begin(), p.end(), x.begin());
      b.targets(r, c) = 1.0;
      // Draws happen unconditionally so the stream layout does not depend on
      // cooccurrence_prob.
      const double u = rng.uniform();
      const std::size_t other = (c + 1 + rng.index(C - 1)) % C;
      if (u < spec.cooccurrence_prob) {
        auto q = proto.row(other);
        for (std::size_t d = 0; d < D; ++d) x[d] += 0.5 * q[d];
        b.targets(r, other) = 1.0;
      }
      for (std::size_t d = 0; d < D; ++d) {
        const double n = rng.normal();
        x[d] += spec.noise_scale * n;
      }
    }
  }
  return b;
}

}  // namespace

SplitBundles generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const Matrix proto = class_prototypes(spec.num_classes, spec.feature_dim, spec.seed);
  Rng rng(mix_seed(spec.seed, 1));
  SplitBundles out;
  std::uint64_t next_id = 0;
  out.train = make_split(spec, proto, Split::Train, spec.train_per_class, next_id, rng);
  next_id += out.train.num_samples();
  out.valid = make_split(spec, proto, Split::Valid, spec.valid_per_class, next_id, rng);
  next_id += out.valid.num_samples();
  out.test = make_split(spec, proto, Split::Test, spec.test_per_class, next_id, rng);
  return out;
}

bool is_hard(const Matrix& targets) {
  return std::all_of(targets.values().begin(), targets.values().end(),
                     [](double y) { return y == 0.0 || y == 1.0; });
}

int dominant_class(std::span<const double> row) {
  int best = -1;
  double best_value = 0.0;
  for (std::size_t c = 0; c < row.size(); ++c) {
    if (row[c] > best_value) {
      best_value = row[c];
      best = static_cast<int>(c);
    }
  }
  return best;
}

Matrix binarize(const Matrix& targets) {
  Matrix out(targets.rows(), targets.cols());
  for (std::size_t i = 0; i < targets.size(); ++i)
    out.values()[i] = targets.values()[i] >= 0.5 ? 1.0 : 0.0;
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

DatasetBundle load_feature_csv(const std::filesystem::path& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("empty dataset: " + path.string());
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header_fields = split_fields(line);
  const std::vector<std::string> header(header_fields.begin(), header_fields.end());
  std::size_t D = 0;
  while (D < header.size() && header[D] == "f_" + std::to_string(D)) ++D;
  std::size_t C = 0;
  while (D + C < header.size() && header[D + C] == "y_" + std::to_string(C)) ++C;
  if (D == 0 || C == 0 || D + C != header.size())
    throw DataError("malformed header: expected f_0..f_{D-1},y_0..y_{C-1}", line_no);

  std::vector<double> features;
  std::vector<double> targets;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != D + C)
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(D + C) +
                          " fields, found " + std::to_string(fields.size()),
                      line_no);
    for (std::size_t k = 0; k < fields.size(); ++k) {
      double v;
      if (!parse_double(fields[k], v) || !std::isfinite(v))
        throw DataError("line " + std::to_string(line_no) + ": malformed number in column " +
                            std::string(header[k]),
                        line_no);
      if (k < D) {
        features.push_back(v);
      } else {
        if (!(v >= 0.0 && v <= 1.0))
          throw DataError("line " + std::to_string(line_no) + " (row " + std::to_string(rows) +
                              "): target " + std::string(header[k]) + " = " +
                              std::string(fields[k]) + " outside [0,1]",
                          line_no);
        targets.push_back(v);
      }
    }
    ++rows;
  }
  if (rows == 0) throw DataError("empty dataset: " + path.string());

  DatasetBundle b;
  b.split = split;
  b.features = Matrix(rows, D, std::move(features));
  b.targets = Matrix(rows, C, std::move(targets));
  b.class_names = default_class_names(C);
  b.sample_ids.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) b.sample_ids[r] = r;
  b.validate();
  return b;
}

void write_feature_csv(const std::filesystem::path& path, const DatasetBundle& bundle) {
  bundle.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::size_t D = bundle.feature_dim();
  const std::size_t C = bundle.num_classes();
  for (std::size_t d = 0; d < D; ++d) out << (d ? "," : "") << "f_" << d;
  for (std::size_t c = 0; c < C; ++c) out << ",y_" << c;
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < bundle.num_samples(); ++r) {
    for (std::size_t d = 0; d < D; ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", bundle.features(r, d));
      out << (d ? "," : "") << buf;
    }
    for (std::size_t c = 0; c < C; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", bundle.targets(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace csu
