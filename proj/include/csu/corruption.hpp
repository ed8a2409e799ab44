#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "csu/matrix.hpp"

namespace csu {

enum class CorruptionKind { SAN, MAN, SLN, MIX };

std::string_view to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(std::string_view text);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::SAN;
  double ratio = 0.0;
  /// confusion_map[c] lists the classes a misassigned positive of c may move to.
  std::optional<std::vector<std::vector<int>>> confusion_map;
  double soft_value = 0.6;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on a violated invariant. Returns true when
  /// the ratio is valid but off the {0, 0.1, ..., 0.5} grid.
  bool validate(std::size_t num_classes) const;
};

struct CorruptionRecord {
  std::size_t sample_id = 0;
  CorruptionKind kind = CorruptionKind::SAN;
  int class_from = -1;
  int class_to = -1;
  double old_value = 0.0;
  double new_value = 0.0;

  bool operator==(const CorruptionRecord&) const = default;
};

struct CorruptionReport {
  std::vector<std::size_t> per_class_counts;
  std::vector<CorruptionRecord> records;
  bool off_grid_ratio = false;

  bool empty() const noexcept { return records.empty(); }
};

struct CorruptionResult {
  Matrix targets;
  CorruptionReport report;
};

/// Half-up rounding of ratio * n, the per-class corruption budget.
std::size_t corruption_budget(double ratio, std::size_t n);

/// Spurious addition: each selected clip gains one positive on a uniformly
/// chosen absent class. Nothing is removed.
CorruptionResult inject_san(const Matrix& targets, const CorruptionSpec& spec);

/// Misassignment: each selected clip's positive at its dominant class moves to
/// a confusable (or uniformly chosen) absent class.
CorruptionResult inject_man(const Matrix& targets, const CorruptionSpec& spec);

/// Soft labels: each selected clip's dominant positive becomes spec.soft_value.
CorruptionResult inject_sln(const Matrix& targets, const CorruptionSpec& spec);

/// 1:1:1 mixture; per class the selected clips are split SAN, MAN, SLN with
/// remainders assigned in that order.
CorruptionResult inject_mixed(const Matrix& targets, const CorruptionSpec& spec);

/// Dispatches on spec.kind.
CorruptionResult inject(const Matrix& targets, const CorruptionSpec& spec);

/// One JSON object per line: sample_id, kind, class_from, class_to, old, new.
void write_report_jsonl(std::ostream& out, const CorruptionReport& report);
CorruptionReport read_report_jsonl(std::istream& in, std::size_t num_classes);

}  // namespace csu
