#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "csu/metrics.hpp"
#include "csu/random.hpp"

using namespace csu;

namespace {

// rank(i) = 1 + #{j ranked ahead of i}; ahead = higher score, or equal score and lower index.
double oracle_ap(const std::vector<double>& s, const std::vector<double>& y) {
  const std::size_t n = s.size();
  auto ahead = [&](std::size_t j, std::size_t i) { return s[j] > s[i] || (s[j] == s[i] && j < i); };
  double total = 0;
  int pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] < 0.5) continue;
    ++pos;
    double rank = 1, hits = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !ahead(j, i)) continue;
      rank += 1;
      hits += y[j] >= 0.5;
    }
    total += hits / rank;
  }
  return pos ? total / pos : std::nan("");
}

double oracle_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double wins = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!(y[i] >= 0.5 && y[j] < 0.5)) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return pairs ? wins / pairs : std::nan("");
}

double oracle_f1(const Matrix& s, const Matrix& y) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const bool p = s.values()[k] >= 0.5, t = y.values()[k] >= 0.5;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  return tp + fp + fn == 0 ? 1.0 : 2 * tp / (2 * tp + fp + fn);
}

double oracle_exact(const Matrix& s, const Matrix& y) {
  double ok = 0;
  for (std::size_t r = 0; r < s.rows(); ++r) {
    bool same = true;
    for (std::size_t c = 0; c < s.cols(); ++c) same &= (s(r, c) >= 0.5) == (y(r, c) >= 0.5);
    ok += same;
  }
  return ok / s.rows();
}

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
  return out;
}

}  // namespace

TEST(Metrics, ApWorkedExample) {
  const std::vector<double> s{0.9, 0.8, 0.7}, y{1, 0, 1};
  EXPECT_NEAR(*average_precision(s, y), 5.0 / 6.0, 1e-15);
}

TEST(Metrics, ApPerfectInvertedAndTied) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  EXPECT_EQ(*average_precision(s, std::vector<double>{1, 1, 0, 0}), 1.0);
  // positives ranked last: (1/3 + 2/4) / 2
  EXPECT_NEAR(*average_precision(s, std::vector<double>{0, 0, 1, 1}), (1.0 / 3 + 0.5) / 2, 1e-15);
  // all tied: index order decides, positives at ranks 2 and 4
  const std::vector<double> tied(4, 0.5), y{0, 1, 0, 1};
  EXPECT_NEAR(*average_precision(tied, y), oracle_ap(tied, y), 1e-15);
  EXPECT_NEAR(*average_precision(tied, y), (0.5 + 0.5) / 2, 1e-15);
  EXPECT_FALSE(average_precision(s, std::vector<double>{0, 0, 0, 0}));
}

TEST(Metrics, AucEdgeCases) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  EXPECT_EQ(*roc_auc(s, std::vector<double>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(*roc_auc(std::vector<double>(4, 0.2), std::vector<double>{1, 0, 1, 0}), 0.5);
  EXPECT_FALSE(roc_auc(s, std::vector<double>{1, 1, 1, 1}));
  EXPECT_FALSE(roc_auc(s, std::vector<double>{0, 0, 0, 0}));
}

TEST(Metrics, F1AndExactMatchEdgeCases) {
  Matrix y(2, 3, std::vector<double>{1, 0, 0, 0, 1, 1});
  EXPECT_EQ(f1_micro(y, y), 1.0);
  EXPECT_EQ(exact_match(y, y), 1.0);
  EXPECT_EQ(f1_micro(Matrix(2, 3), y), 0.0);
  EXPECT_EQ(f1_micro(Matrix(2, 3), Matrix(2, 3)), 1.0);
}

TEST(Metrics, BruteForceAgreement) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t N = 1 + rng.index(12), C = 1 + rng.index(5);
    Matrix s(N, C), y(N, C);
    // coarse scores produce plenty of ties
    for (auto& v : s.values()) v = rng.index(6) / 5.0;
    for (auto& v : y.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const auto sc = column(s, c), yc = column(y, c);
      const auto ap = average_precision(sc, yc);
      const double o = oracle_ap(sc, yc);
      ASSERT_EQ(ap.has_value(), !std::isnan(o));
      if (ap) EXPECT_NEAR(*ap, o, 1e-12);
      const auto auc = roc_auc(sc, yc);
      const double oa = oracle_auc(sc, yc);
      ASSERT_EQ(auc.has_value(), !std::isnan(oa));
      if (auc) EXPECT_NEAR(*auc, oa, 1e-12);
    }
    EXPECT_NEAR(f1_micro(s, y), oracle_f1(s, y), 1e-12);
    EXPECT_NEAR(exact_match(s, y), oracle_exact(s, y), 1e-12);
  }
}

TEST(Metrics, EvaluateMatchesNaiveRecomputation) {
  Rng rng(22);
  Matrix s(10, 5), y(10, 5);
  for (auto& v : s.values()) v = rng.uniform();
  for (auto& v : y.values()) v = rng.uniform() < 0.35 ? 1.0 : 0.0;
  y(0, 4) = 1;
  y(1, 4) = 0;
  const auto rep = evaluate(s, y);
  double sum_ap = 0, sum_auc = 0;
  int n_ap = 0, n_auc = 0;
  for (std::size_t c = 0; c < 5; ++c) {
    const double a = oracle_ap(column(s, c), column(y, c));
    const double u = oracle_auc(column(s, c), column(y, c));
    if (!std::isnan(a)) sum_ap += a, ++n_ap;
    if (!std::isnan(u)) sum_auc += u, ++n_auc;
  }
  EXPECT_NEAR(rep.map, sum_ap / n_ap, 1e-12);
  EXPECT_EQ(rep.auprc_macro, rep.map);
  EXPECT_NEAR(rep.roc_auc_macro, sum_auc / n_auc, 1e-12);
  EXPECT_NEAR(rep.f1_micro, oracle_f1(s, y), 1e-12);
  EXPECT_NEAR(rep.exact_match_acc, oracle_exact(s, y), 1e-12);
  EXPECT_EQ(rep.n_samples, 10u);
}

TEST(Metrics, EvaluateFlagsClassesWithoutPositives) {
  Matrix s(3, 2, std::vector<double>{0.9, 0.1, 0.2, 0.3, 0.4, 0.6});
  Matrix y(3, 2, std::vector<double>{1, 0, 0, 0, 1, 0});
  const auto rep = evaluate(s, y);
  ASSERT_EQ(rep.flagged_classes.size(), 1u);
  EXPECT_EQ(rep.flagged_classes[0], 1u);
  EXPECT_FALSE(rep.per_class_ap[1]);
  EXPECT_EQ(rep.map, *rep.per_class_ap[0]);
}

TEST(Metrics, IdentityScoresGiveOnes) {
  Matrix y(4, 3, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 1});
  const auto rep = evaluate(y, y);
  EXPECT_EQ(rep.map, 1.0);
  EXPECT_EQ(rep.roc_auc_macro, 1.0);
  EXPECT_EQ(rep.f1_micro, 1.0);
  EXPECT_EQ(rep.exact_match_acc, 1.0);
}

TEST(Metrics, SoftTargetsAreBinarized) {
  Matrix s(2, 2, std::vector<double>{0.9, 0.1, 0.2, 0.7});
  Matrix soft(2, 2, std::vector<double>{0.6, 0, 0, 0.6});
  Matrix hard(2, 2, std::vector<double>{1, 0, 0, 1});
  EXPECT_EQ(evaluate(s, soft).csv_row(), evaluate(s, hard).csv_row());
}

TEST(Metrics, MonotoneTransformAndPermutationInvariance) {
  Rng rng(23);
  const std::size_t N = 30, C = 4;
  Matrix s(N, C), y(N, C);
  for (auto& v : s.values()) v = rng.uniform(0.01, 0.99);
  for (auto& v : y.values()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  for (std::size_t c = 0; c < C; ++c) y(c, c) = 1, y(c + C, c) = 0;
  const auto base = evaluate(s, y);

  Matrix cubed = s;
  for (auto& v : cubed.values()) v = v * v * v;
  const auto t = evaluate(cubed, y);
  EXPECT_NEAR(t.map, base.map, 1e-15);
  EXPECT_NEAR(t.roc_auc_macro, base.roc_auc_macro, 1e-15);

  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<std::size_t>(perm));
  const auto p = evaluate(gather_rows(s, perm), gather_rows(y, perm));
  EXPECT_NEAR(p.map, base.map, 1e-12);
  EXPECT_NEAR(p.roc_auc_macro, base.roc_auc_macro, 1e-12);
  EXPECT_NEAR(p.f1_micro, base.f1_micro, 1e-15);
  EXPECT_NEAR(p.exact_match_acc, base.exact_match_acc, 1e-15);
}
