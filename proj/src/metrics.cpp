#include "csu/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace csu {

namespace {

bool positive(double y) { return y >= 0.5; }

std::vector<std::size_t> ranking(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

void require_len(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("scores and labels differ in length");
}

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
  return out;
}

}  // namespace

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const double> labels) {
  require_len(scores, labels);
  const auto order = ranking(scores);
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (positive(labels[order[k]])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const double> labels) {
  require_len(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Walk tie groups in ascending score; each positive beats every earlier
  // negative and ties with negatives in its own group.
  double concordant = 0.0;
  double negatives_below = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0, group_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (positive(labels[order[j]]))
        ++group_pos;
      else
        ++group_neg;
      ++j;
    }
    concordant += static_cast<double>(group_pos) *
                  (negatives_below + 0.5 * static_cast<double>(group_neg));
    negatives_below += static_cast<double>(group_neg);
    n_pos += group_pos;
    n_neg += group_neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return concordant / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double f1_micro(const Matrix& scores, const Matrix& labels, double threshold) {
  require_same_shape(scores, labels, "f1_micro");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores.values()[i] >= threshold;
    const bool truth = positive(labels.values()[i]);
    if (pred && truth) ++tp;
    if (pred && !truth) ++fp;
    if (!pred && truth) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(2 * tp) / static_cast<double>(denom);
}

double exact_match(const Matrix& scores, const Matrix& labels, double threshold) {
  require_same_shape(scores, labels, "exact_match");
  if (scores.rows() == 0) return 0.0;
  std::size_t matches = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    bool all = true;
    for (std::size_t c = 0; c < scores.cols() && all; ++c)
      all = (scores(r, c) >= threshold) == positive(labels(r, c));
    if (all) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(scores.rows());
}

double argmax_accuracy(const Matrix& scores, const Matrix& labels) {
  require_same_shape(scores, labels, "argmax_accuracy");
  std::size_t rows = 0, hits = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = labels.row(r);
    if (std::none_of(row.begin(), row.end(), positive)) continue;
    ++rows;
    auto s = scores.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    if (positive(labels(r, best))) ++hits;
  }
  return rows == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(rows);
}

MetricReport evaluate(const Matrix& scores, const Matrix& targets, double threshold) {
  require_same_shape(scores, targets, "evaluate");
  MetricReport rep;
  rep.n_samples = scores.rows();
  const std::size_t C = scores.cols();
  rep.per_class_ap.resize(C);
  double ap_sum = 0.0, auc_sum = 0.0;
  std::size_t ap_n = 0, auc_n = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const auto s = column(scores, c);
    const auto y = column(targets, c);
    rep.per_class_ap[c] = average_precision(s, y);
    const auto auc = roc_auc(s, y);
    if (rep.per_class_ap[c]) {
      ap_sum += *rep.per_class_ap[c];
      ++ap_n;
    }
    if (auc) {
      auc_sum += *auc;
      ++auc_n;
    }
    if (!rep.per_class_ap[c] || !auc) rep.flagged_classes.push_back(c);
  }
  rep.map = ap_n ? ap_sum / static_cast<double>(ap_n) : 0.0;
  rep.auprc_macro = rep.map;
  rep.roc_auc_macro = auc_n ? auc_sum / static_cast<double>(auc_n) : 0.0;
  rep.f1_micro = f1_micro(scores, targets, threshold);
  rep.exact_match_acc = exact_match(scores, targets, threshold);
  rep.argmax_acc = argmax_accuracy(scores, targets);
  return rep;
}

std::string MetricReport::csv_header() {
  return "map,auprc_macro,roc_auc_macro,f1_micro,exact_match_acc,argmax_acc,n_samples";
}

std::string MetricReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu", map, auprc_macro,
                roc_auc_macro, f1_micro, exact_match_acc, argmax_acc, n_samples);
  return buf;
}

}  // namespace csu
