#include "csu/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "csu/core.hpp"
#include "csu/random.hpp"

namespace csu {

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::SAN: return "SAN";
    case CorruptionKind::MAN: return "MAN";
    case CorruptionKind::SLN: return "SLN";
    case CorruptionKind::MIX: return "MIX";
  }
  return "?";
}

CorruptionKind parse_corruption_kind(std::string_view text) {
  if (text == "SAN") return CorruptionKind::SAN;
  if (text == "MAN") return CorruptionKind::MAN;
  if (text == "SLN") return CorruptionKind::SLN;
  if (text == "MIX") return CorruptionKind::MIX;
  throw std::invalid_argument("unknown corruption kind '" + std::string(text) + "'");
}

bool CorruptionSpec::validate(std::size_t num_classes) const {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw std::invalid_argument("corruption ratio must lie in [0,1]");
  if (!(soft_value > 0.0 && soft_value < 1.0))
    throw std::invalid_argument("soft_value must lie strictly inside (0,1)");
  if (confusion_map) {
    if (confusion_map->size() != num_classes)
      throw std::invalid_argument("confusion_map needs one entry per class");
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (int to : (*confusion_map)[c]) {
        if (to < 0 || static_cast<std::size_t>(to) >= num_classes)
          throw std::invalid_argument("confusion_map entry out of range for class " +
                                      std::to_string(c));
        if (static_cast<std::size_t>(to) == c)
          throw std::invalid_argument("confusion_map maps class " + std::to_string(c) +
                                      " to itself");
      }
    }
  }
  const double tenths = ratio * 10.0;
  const bool on_grid = ratio <= 0.5 + 1e-12 && std::abs(tenths - std::round(tenths)) < 1e-9;
  return !on_grid;
}

std::size_t corruption_budget(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5 + 1e-9));
}

namespace {

struct Selection {
  std::vector<std::size_t> clean_counts;             // n_c
  std::vector<std::vector<std::size_t>> rows;        // selected rows per class
};

Selection select_rows(const Matrix& targets, double ratio, std::uint64_t seed) {
  const std::size_t C = targets.cols();
  std::vector<std::vector<std::size_t>> by_class(C);
  for (std::size_t r = 0; r < targets.rows(); ++r) {
    const int c = dominant_class(targets.row(r));
    if (c >= 0) by_class[static_cast<std::size_t>(c)].push_back(r);
  }
  Rng rng(mix_seed(seed, 2));
  Selection sel;
  sel.clean_counts.resize(C);
  sel.rows.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    auto& pool = by_class[c];
    sel.clean_counts[c] = pool.size();
    rng.shuffle(std::span<std::size_t>(pool));
    const std::size_t k = std::min(corruption_budget(ratio, pool.size()), pool.size());
    sel.rows[c].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return sel;
}

void require_hard(const Matrix& targets) {
  if (!is_hard(targets))
    throw std::invalid_argument("corruption requires hard (0/1) clean targets");
}

std::vector<std::size_t> absent_classes(std::span<const double> row) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < row.size(); ++c)
    if (row[c] == 0.0) out.push_back(c);
  return out;
}

class Injector {
public:
  Injector(Matrix& targets, const CorruptionSpec& spec, Rng& rng, CorruptionReport& report)
      : t_(targets), spec_(spec), rng_(rng), report_(report) {}

  void san(std::size_t r, std::size_t c) {
    const auto absent = absent_classes(t_.row(r));
    if (absent.empty())
      throw std::invalid_argument("SAN: row " + std::to_string(r) + " has no absent class");
    const std::size_t to = absent[rng_.index(absent.size())];
    t_(r, to) = 1.0;
    record(r, CorruptionKind::SAN, c, to, 0.0, 1.0);
  }

  void man(std::size_t r, std::size_t c) {
    std::vector<std::size_t> candidates;
    if (spec_.confusion_map) {
      const auto& targets = (*spec_.confusion_map)[c];
      if (targets.empty())
        throw std::invalid_argument("MAN: empty confusion_map entry for class " +
                                    std::to_string(c));
      for (int to : targets)
        if (t_(r, static_cast<std::size_t>(to)) == 0.0)
          candidates.push_back(static_cast<std::size_t>(to));
    } else {
      candidates = absent_classes(t_.row(r));
    }
    if (candidates.empty())
      throw std::invalid_argument("MAN: no absent target class available for row " +
                                  std::to_string(r));
    const std::size_t to = candidates[rng_.index(candidates.size())];
    t_(r, c) = 0.0;
    t_(r, to) = 1.0;
    record(r, CorruptionKind::MAN, c, to, 1.0, 1.0);
  }

  void sln(std::size_t r, std::size_t c) {
    const double old = t_(r, c);
    t_(r, c) = spec_.soft_value;
    record(r, CorruptionKind::SLN, c, c, old, spec_.soft_value);
  }

private:
  void record(std::size_t r, CorruptionKind kind, std::size_t from, std::size_t to, double old_v,
              double new_v) {
    report_.records.push_back({r, kind, static_cast<int>(from), static_cast<int>(to), old_v, new_v});
    ++report_.per_class_counts[from];
  }

  Matrix& t_;
  const CorruptionSpec& spec_;
  Rng& rng_;
  CorruptionReport& report_;
};

CorruptionResult run(const Matrix& targets, const CorruptionSpec& spec, CorruptionKind kind) {
  require_hard(targets);
  const std::size_t C = targets.cols();
  CorruptionResult result{targets, {}};
  result.report.off_grid_ratio = spec.validate(C);
  result.report.per_class_counts.assign(C, 0);
  if (spec.ratio > 0.0 && C < 2 && kind != CorruptionKind::SLN)
    throw std::invalid_argument(std::string(to_string(kind)) +
                                ": needs at least two classes when ratio > 0");

  const Selection sel = select_rows(targets, spec.ratio, spec.seed);
  Rng rng(mix_seed(spec.seed, 3));
  Injector inj(result.targets, spec, rng, result.report);

  for (std::size_t c = 0; c < C; ++c) {
    const auto& rows = sel.rows[c];
    switch (kind) {
      case CorruptionKind::SAN:
        for (std::size_t r : rows) inj.san(r, c);
        break;
      case CorruptionKind::MAN:
        for (std::size_t r : rows) inj.man(r, c);
        break;
      case CorruptionKind::SLN:
        for (std::size_t r : rows) inj.sln(r, c);
        break;
      case CorruptionKind::MIX: {
        const std::size_t k = rows.size();
        const std::size_t n_san = k / 3 + (k % 3 >= 1 ? 1 : 0);
        const std::size_t n_man = k / 3 + (k % 3 >= 2 ? 1 : 0);
        for (std::size_t i = 0; i < k; ++i) {
          if (i < n_san)
            inj.san(rows[i], c);
          else if (i < n_san + n_man)
            inj.man(rows[i], c);
          else
            inj.sln(rows[i], c);
        }
        break;
      }
    }
  }
  return result;
}

}  // namespace

CorruptionResult inject_san(const Matrix& targets, const CorruptionSpec& spec) {
  return run(targets, spec, CorruptionKind::SAN);
}
CorruptionResult inject_man(const Matrix& targets, const CorruptionSpec& spec) {
  return run(targets, spec, CorruptionKind::MAN);
}
CorruptionResult inject_sln(const Matrix& targets, const CorruptionSpec& spec) {
  return run(targets, spec, CorruptionKind::SLN);
}
CorruptionResult inject_mixed(const Matrix& targets, const CorruptionSpec& spec) {
  return run(targets, spec, CorruptionKind::MIX);
}

CorruptionResult inject(const Matrix& targets, const CorruptionSpec& spec) {
  return run(targets, spec, spec.kind);
}

void write_report_jsonl(std::ostream& out, const CorruptionReport& report) {
  for (const auto& rec : report.records) {
    nlohmann::ordered_json j;
    j["sample_id"] = rec.sample_id;
    j["kind"] = std::string(to_string(rec.kind));
    j["class_from"] = rec.class_from;
    j["class_to"] = rec.class_to;
    j["old"] = rec.old_value;
    j["new"] = rec.new_value;
    out << j.dump() << '\n';
  }
}

CorruptionReport read_report_jsonl(std::istream& in, std::size_t num_classes) {
  CorruptionReport report;
  report.per_class_counts.assign(num_classes, 0);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    CorruptionRecord rec;
    rec.sample_id = j.at("sample_id").get<std::size_t>();
    rec.kind = parse_corruption_kind(j.at("kind").get<std::string>());
    rec.class_from = j.at("class_from").get<int>();
    rec.class_to = j.at("class_to").get<int>();
    rec.old_value = j.at("old").get<double>();
    rec.new_value = j.at("new").get<double>();
    if (rec.class_from < 0 || static_cast<std::size_t>(rec.class_from) >= num_classes)
      throw std::invalid_argument("corruption record class_from out of range");
    ++report.per_class_counts[static_cast<std::size_t>(rec.class_from)];
    report.records.push_back(rec);
  }
  return report;
}

}  // namespace csu
