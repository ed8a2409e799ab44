#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csu/matrix.hpp"

namespace csu {

/// Non-interpolated average precision. Ranking is by descending score with
/// ties broken by ascending index. Labels are positive when >= 0.5.
/// Returns nullopt when there is no positive label.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const double> labels);

/// Mann-Whitney AUC, ties counted as one half. nullopt unless both classes
/// are present.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const double> labels);

/// Micro-F1 pooled over every (sample, class) cell. A prediction is positive
/// when score >= threshold. Defined as 1 when there are no positives at all.
double f1_micro(const Matrix& scores, const Matrix& labels, double threshold = 0.5);

/// Share of rows whose thresholded prediction equals the binarized label row.
double exact_match(const Matrix& scores, const Matrix& labels, double threshold = 0.5);

/// Share of rows with a positive label whose top-scoring class is positive.
double argmax_accuracy(const Matrix& scores, const Matrix& labels);

struct MetricReport {
  double map = 0.0;
  std::vector<std::optional<double>> per_class_ap;
  double auprc_macro = 0.0;
  double roc_auc_macro = 0.0;
  double f1_micro = 0.0;
  double exact_match_acc = 0.0;
  double argmax_acc = 0.0;
  std::size_t n_samples = 0;
  std::vector<std::size_t> flagged_classes;  // no positive (or no negative for AUC)

  static std::string csv_header();
  std::string csv_row() const;
};

/// Targets are binarized at 0.5 before scoring.
MetricReport evaluate(const Matrix& scores, const Matrix& targets, double threshold = 0.5);

}  // namespace csu
