#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "csu/matrix.hpp"
#include "csu/trainer.hpp"

namespace csu {

/// Median over classes of 1 / sigma^2 for every recorded epoch of one run.
std::vector<double> median_multiplier_series(const RunRecord& record);

struct TrajectorySeries {
  std::vector<double> progress;  // normalized training progress in [0, 1]
  std::vector<double> mean;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  std::size_t num_runs = 0;
};

/// Resamples each run's median-multiplier series onto a common progress grid
/// (linear interpolation) and aggregates mean and a normal-approximation 95%
/// interval across runs. Epoch e of an E-epoch run sits at (e-1)/(E-1).
TrajectorySeries multiplier_trajectory(std::span<const RunRecord> records,
                                       std::size_t grid_points = 101);

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
  bool degenerate = false;  // zero spread; fallback bandwidth in use
};

/// Gaussian KDE with Silverman bandwidth 1.06 sd n^(-1/5) on a grid spanning
/// the data range plus 4 bandwidths on each side.
KdeCurve sigma_kde(std::span<const double> sigmas, std::size_t grid_points = 512);

struct ScorePlaneSurface {
  std::size_t bins = 0;
  std::vector<double> mean_loss;    // bins x bins, row = target-score bin
  std::vector<std::size_t> counts;  // bins x bins
  std::size_t skipped_rows = 0;

  bool empty_cell(std::size_t bx, std::size_t by) const { return counts[bx * bins + by] == 0; }
  double loss_at(std::size_t bx, std::size_t by) const { return mean_loss[bx * bins + by]; }
  std::size_t count_at(std::size_t bx, std::size_t by) const { return counts[bx * bins + by]; }
};

/// Bins each sample by (probability of its first positive class, mean
/// probability over the other classes); the height is the per-bin mean of the
/// sample's binary cross-entropy summed over classes. Empty bins hold NaN.
ScorePlaneSurface score_plane_surface(const Matrix& probabilities, const Matrix& targets,
                                      std::size_t bins = 32);

struct GeometrySummary {
  double base_loss = 0.0;
  double radius = 0.0;
  double tau = 0.0;
  double curvature = 0.0;       // mean directional second difference
  double curvature_sd = 0.0;
  double basin_fraction = 0.0;  // share of radius-r perturbations within tau
  std::size_t directions_used = 0;
  std::size_t discarded = 0;
};

struct GeometryOptions {
  std::size_t directions = 64;
  double radius = 0.0;  // <= 0: 0.05 * ||theta||
  double tau = 0.0;     // <= 0: 0.05 * L(theta)
  std::uint64_t seed = 0;
};

using LossFunctional = std::function<double(std::span<const double>)>;

/// Random-direction probes of the loss around theta.
GeometrySummary local_geometry(const LossFunctional& loss, std::span<const double> theta,
                               const GeometryOptions& options = {});

/// Mean plain binary cross-entropy (summed over classes) of `shape` with its
/// parameters replaced by the probe vector.
LossFunctional model_loss_functional(const ModelParams& shape, const Matrix& features,
                                     const Matrix& targets);

struct MeanCi {
  double mean = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// Mean with a normal-approximation 95% interval. Sums in sorted order so the
/// result does not depend on input order.
MeanCi mean_ci(std::span<const double> values);

void write_trajectory_csv(std::ostream& out, const TrajectorySeries& series);
void write_kde_csv(std::ostream& out, const KdeCurve& curve);
void write_surface_csv(std::ostream& out, const ScorePlaneSurface& surface);
/// Rows of (metric, value, ci_lo, ci_hi).
struct GeometryRow {
  std::string metric;
  MeanCi stats;
};
void write_geometry_csv(std::ostream& out, std::span<const GeometryRow> rows);

}  // namespace csu
