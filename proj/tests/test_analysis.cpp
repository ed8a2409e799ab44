#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "csu/analysis.hpp"
#include "csu/random.hpp"

using namespace csu;

namespace {

RunRecord record_with(const std::vector<std::vector<double>>& sigmas_per_epoch) {
  RunRecord r;
  r.loss = "CSU";
  for (std::size_t e = 0; e < sigmas_per_epoch.size(); ++e) {
    EpochRecord er;
    er.epoch = e + 1;
    er.sigmas = sigmas_per_epoch[e];
    r.epochs.push_back(er);
  }
  return r;
}

}  // namespace

TEST(Analysis, MedianMultiplierByHand) {
  // 1/sigma^2: {4, 1, 0.25} -> median 1 ; {1, 0.25, 0.0625, 4} -> median (0.25 + 1) / 2
  const auto r = record_with({{0.5, 1.0, 2.0}, {1.0, 2.0, 4.0, 0.5}});
  const auto m = median_multiplier_series(r);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m[0], 1.0);
  EXPECT_DOUBLE_EQ(m[1], 0.625);
  EXPECT_THROW(median_multiplier_series(record_with({{}})), std::invalid_argument);
}

TEST(Analysis, TrajectoryResamplesAndAggregates) {
  // run a: multipliers 1, 0.25, 0.0625 over 3 epochs; run b: constant 1 over 5 epochs
  const std::vector<RunRecord> runs{record_with({{1.0}, {2.0}, {4.0}}),
                                    record_with({{1.0}, {1.0}, {1.0}, {1.0}, {1.0}})};
  const auto t = multiplier_trajectory(runs, 5);
  ASSERT_EQ(t.progress.size(), 5u);
  EXPECT_EQ(t.num_runs, 2u);
  EXPECT_DOUBLE_EQ(t.progress[2], 0.5);
  EXPECT_DOUBLE_EQ(t.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(t.mean[2], (0.25 + 1.0) / 2);
  EXPECT_DOUBLE_EQ(t.mean[1], ((1.0 + 0.25) / 2 + 1.0) / 2);  // halfway between epochs 1 and 2 of run a
  EXPECT_DOUBLE_EQ(t.mean[4], (0.0625 + 1.0) / 2);
  EXPECT_LT(t.ci_lo[4], t.mean[4]);
  EXPECT_GT(t.ci_hi[4], t.mean[4]);

  const std::vector<RunRecord> swapped{runs[1], runs[0]};
  const auto u = multiplier_trajectory(swapped, 5);
  EXPECT_EQ(u.mean, t.mean);
  EXPECT_EQ(u.ci_hi, t.ci_hi);

  const auto single = multiplier_trajectory(std::span(runs).first(1), 3);
  EXPECT_EQ(single.ci_lo, single.mean);
}

TEST(Analysis, MeanCi) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto ci = mean_ci(v);
  const double half = 1.96 * std::sqrt(5.0 / 3.0) / 2.0;
  EXPECT_DOUBLE_EQ(ci.mean, 2.5);
  EXPECT_NEAR(ci.ci_hi - ci.mean, half, 1e-12);
  EXPECT_NEAR(ci.mean - ci.ci_lo, half, 1e-12);
}

TEST(Analysis, KdeBandwidthAndMass) {
  Rng rng(31);
  std::vector<double> x;
  for (int i = 0; i < 300; ++i) x.push_back(rng.normal() * 0.1 + 1.0);
  for (int i = 0; i < 300; ++i) x.push_back(rng.normal() * 0.1 + 3.0);
  double mean = 0;
  for (double v : x) mean += v;
  mean /= x.size();
  double ss = 0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (x.size() - 1));

  const auto k = sigma_kde(x, 2048);
  EXPECT_NEAR(k.bandwidth, 1.06 * sd * std::pow(600.0, -0.2), 1e-12);
  EXPECT_FALSE(k.degenerate);
  double mass = 0;
  for (std::size_t g = 1; g < k.grid.size(); ++g)
    mass += 0.5 * (k.density[g] + k.density[g - 1]) * (k.grid[g] - k.grid[g - 1]);
  EXPECT_NEAR(mass, 1.0, 1e-3);

  auto density_at = [&](double at) {
    std::size_t best = 0;
    for (std::size_t g = 0; g < k.grid.size(); ++g)
      if (std::abs(k.grid[g] - at) < std::abs(k.grid[best] - at)) best = g;
    return k.density[best];
  };
  EXPECT_GT(density_at(1.0), 3 * density_at(2.0));
  EXPECT_GT(density_at(3.0), 3 * density_at(2.0));
}

TEST(Analysis, KdeDegenerateInput) {
  const std::vector<double> same(5, 2.0);
  const auto k = sigma_kde(same, 64);
  EXPECT_TRUE(k.degenerate);
  EXPECT_GT(k.bandwidth, 0.0);
  for (double d : k.density) EXPECT_TRUE(std::isfinite(d));
}

TEST(Analysis, SurfaceBinsByHand) {
  // bins = 2; rows: target p=0.8 others mean 0.2 -> (1,0); p=0.3 others 0.6 -> (0,1); p=0.9 others 0.1 -> (1,0)
  Matrix p(4, 3, std::vector<double>{0.8, 0.1, 0.3, 0.7, 0.3, 0.5, 0.1, 0.9, 0.1, 0.5, 0.5, 0.5});
  Matrix y(4, 3, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0});
  const auto s = score_plane_surface(p, y, 2);
  EXPECT_EQ(s.skipped_rows, 1u);
  EXPECT_EQ(s.count_at(1, 0), 2u);
  EXPECT_EQ(s.count_at(0, 1), 1u);
  EXPECT_TRUE(s.empty_cell(0, 0));
  EXPECT_TRUE(std::isnan(s.loss_at(0, 0)));
  auto bce = [](double q, double t) { return -(t * std::log(q) + (1 - t) * std::log(1 - q)); };
  const double row0 = bce(0.8, 1) + bce(0.1, 0) + bce(0.3, 0);
  const double row2 = bce(0.1, 0) + bce(0.9, 1) + bce(0.1, 0);
  const double row1 = bce(0.7, 0) + bce(0.3, 1) + bce(0.5, 0);
  EXPECT_NEAR(s.loss_at(1, 0), (row0 + row2) / 2, 1e-12);
  EXPECT_NEAR(s.loss_at(0, 1), row1, 1e-12);
}

TEST(Analysis, CurvatureOfIsotropicQuadratic) {
  // L = 1.5 ||theta||^2 has second directional derivative 3 along every unit direction
  const LossFunctional quad = [](std::span<const double> t) {
    double s = 0;
    for (double v : t) s += v * v;
    return 1.5 * s;
  };
  const std::vector<double> theta{1, -2, 0.5, 3};
  GeometryOptions o;
  o.directions = 32;
  o.radius = 0.1;
  o.tau = 100;
  const auto g = local_geometry(quad, theta, o);
  EXPECT_NEAR(g.curvature, 3.0, 1e-8);
  EXPECT_NEAR(g.curvature_sd, 0.0, 1e-8);
  EXPECT_EQ(g.basin_fraction, 1.0);
  EXPECT_EQ(g.directions_used, 32u);
}

TEST(Analysis, CurvatureOfAnisotropicQuadratic) {
  // L = 0.5 sum a_i t_i^2, mean curvature over uniform directions = mean(a)
  const std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8};
  const LossFunctional quad = [&](std::span<const double> t) {
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) s += 0.5 * a[i] * t[i] * t[i];
    return s;
  };
  GeometryOptions o;
  o.directions = 4000;
  o.radius = 0.01;
  const auto g = local_geometry(quad, std::vector<double>(8, 1.0), o);
  EXPECT_NEAR(g.curvature, 4.5, 0.15);
  EXPECT_GT(g.curvature_sd, 0.0);
}

TEST(Analysis, BasinFractionAtMinimumIsOneAndFarAwayShrinks) {
  const LossFunctional quad = [](std::span<const double> t) { return 1.0 + t[0] * t[0] + t[1] * t[1]; };
  GeometryOptions o;
  o.radius = 0.1;
  o.tau = 0.02;
  EXPECT_EQ(local_geometry(quad, std::vector<double>{0, 0}, o).basin_fraction, 1.0);
  // away from the minimum the gradient term dominates: about half the directions go downhill
  const auto far = local_geometry(quad, std::vector<double>{5, 0}, o);
  EXPECT_GT(far.basin_fraction, 0.2);
  EXPECT_LT(far.basin_fraction, 0.8);
}

TEST(Analysis, CsvHeaders) {
  std::ostringstream a, b, c, d;
  write_trajectory_csv(a, TrajectorySeries{});
  write_kde_csv(b, KdeCurve{});
  write_surface_csv(c, ScorePlaneSurface{});
  const std::vector<GeometryRow> rows{{"curvature_delta", {1, 0.5, 1.5}}};
  write_geometry_csv(d, rows);
  EXPECT_EQ(a.str(), "progress,mean,lo,hi\n");
  EXPECT_EQ(b.str(), "x,density\n");
  EXPECT_EQ(c.str(), "bin_x,bin_y,mean_loss,count\n");
  EXPECT_EQ(d.str(), "metric,value,ci_lo,ci_hi\ncurvature_delta,1,0.5,1.5\n");
}
