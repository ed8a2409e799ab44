#include "csu/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "csu/csu_loss.hpp"
#include "csu/random.hpp"

namespace csu {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double interpolate(std::span<const double> xs, std::span<const double> ys, double x) {
  if (xs.size() == 1) return ys[0];
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  if (xs[lo] == x) return ys[lo];
  const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + t * (ys[hi] - ys[lo]);
}

void put(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

std::vector<double> median_multiplier_series(const RunRecord& record) {
  std::vector<double> series;
  series.reserve(record.epochs.size());
  for (const auto& e : record.epochs) {
    if (e.sigmas.empty())
      throw std::invalid_argument("run record (seed " + std::to_string(record.seed) +
                                  ") has no sigma snapshot at epoch " + std::to_string(e.epoch));
    std::vector<double> mult(e.sigmas.size());
    for (std::size_t i = 0; i < mult.size(); ++i) mult[i] = 1.0 / (e.sigmas[i] * e.sigmas[i]);
    series.push_back(median(std::move(mult)));
  }
  return series;
}

MeanCi mean_ci(std::span<const double> values) {
  MeanCi out;
  if (values.empty()) return out;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / n;
  if (v.size() < 2) {
    out.ci_lo = out.ci_hi = out.mean;
    return out;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  const double half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  out.ci_lo = out.mean - half;
  out.ci_hi = out.mean + half;
  return out;
}

TrajectorySeries multiplier_trajectory(std::span<const RunRecord> records,
                                       std::size_t grid_points) {
  if (records.empty()) throw std::invalid_argument("multiplier_trajectory: no runs");
  if (grid_points < 2) throw std::invalid_argument("multiplier_trajectory: need >= 2 grid points");

  std::vector<std::vector<double>> resampled;
  for (const auto& rec : records) {
    if (rec.epochs.empty()) throw std::invalid_argument("multiplier_trajectory: empty run");
    const auto series = median_multiplier_series(rec);
    const std::size_t E = series.size();
    std::vector<double> xs(E);
    for (std::size_t e = 0; e < E; ++e)
      xs[e] = E == 1 ? 0.0 : static_cast<double>(e) / static_cast<double>(E - 1);
    std::vector<double> row(grid_points);
    for (std::size_t g = 0; g < grid_points; ++g) {
      const double x = static_cast<double>(g) / static_cast<double>(grid_points - 1);
      row[g] = interpolate(xs, series, x);
    }
    resampled.push_back(std::move(row));
  }

  TrajectorySeries out;
  out.num_runs = records.size();
  std::vector<double> column(records.size());
  for (std::size_t g = 0; g < grid_points; ++g) {
    for (std::size_t r = 0; r < resampled.size(); ++r) column[r] = resampled[r][g];
    const auto stats = mean_ci(column);
    out.progress.push_back(static_cast<double>(g) / static_cast<double>(grid_points - 1));
    out.mean.push_back(stats.mean);
    out.ci_lo.push_back(stats.ci_lo);
    out.ci_hi.push_back(stats.ci_hi);
  }
  return out;
}

KdeCurve sigma_kde(std::span<const double> sigmas, std::size_t grid_points) {
  if (sigmas.size() < 2) throw std::invalid_argument("sigma_kde: need at least two values");
  if (grid_points < 2) throw std::invalid_argument("sigma_kde: need >= 2 grid points");
  const double n = static_cast<double>(sigmas.size());
  double mean = 0.0;
  for (double s : sigmas) mean += s;
  mean /= n;
  double ss = 0.0;
  for (double s : sigmas) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / (n - 1.0));

  KdeCurve curve;
  if (sd > 0.0) {
    curve.bandwidth = 1.06 * sd * std::pow(n, -0.2);
  } else {
    curve.bandwidth = 1e-3;
    curve.degenerate = true;
  }
  const double h = curve.bandwidth;
  const auto [mn, mx] = std::minmax_element(sigmas.begin(), sigmas.end());
  const double lo = *mn - 4.0 * h;
  const double hi = *mx + 4.0 * h;
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  curve.grid.resize(grid_points);
  curve.density.resize(grid_points);
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_points - 1);
    double acc = 0.0;
    for (double s : sigmas) {
      const double u = (x - s) / h;
      acc += std::exp(-0.5 * u * u);
    }
    curve.grid[g] = x;
    curve.density[g] = acc * norm;
  }
  return curve;
}

ScorePlaneSurface score_plane_surface(const Matrix& probabilities, const Matrix& targets,
                                      std::size_t bins) {
  require_same_shape(probabilities, targets, "score_plane_surface");
  if (bins == 0) throw std::invalid_argument("score_plane_surface: bins must be positive");
  if (probabilities.cols() < 2)
    throw std::invalid_argument("score_plane_surface: needs at least two classes");
  const std::size_t C = probabilities.cols();
  ScorePlaneSurface s;
  s.bins = bins;
  s.counts.assign(bins * bins, 0);
  std::vector<double> sums(bins * bins, 0.0);
  auto bin_of = [bins](double v) {
    const double scaled = std::floor(v * static_cast<double>(bins));
    return std::min(static_cast<std::size_t>(std::max(scaled, 0.0)), bins - 1);
  };
  for (std::size_t r = 0; r < probabilities.rows(); ++r) {
    auto y = targets.row(r);
    const auto first = std::find_if(y.begin(), y.end(), [](double v) { return v >= 0.5; });
    if (first == y.end()) {
      ++s.skipped_rows;
      continue;
    }
    const std::size_t target = static_cast<std::size_t>(first - y.begin());
    auto p = probabilities.row(r);
    double other = 0.0;
    double loss = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      if (c != target) other += p[c];
      loss -= y[c] * std::log(p[c]) + (1.0 - y[c]) * std::log1p(-p[c]);
    }
    other /= static_cast<double>(C - 1);
    const std::size_t cell = bin_of(p[target]) * bins + bin_of(other);
    ++s.counts[cell];
    sums[cell] += loss;
  }
  s.mean_loss.resize(bins * bins);
  for (std::size_t k = 0; k < bins * bins; ++k)
    s.mean_loss[k] = s.counts[k] ? sums[k] / static_cast<double>(s.counts[k])
                                 : std::numeric_limits<double>::quiet_NaN();
  return s;
}

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> d(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : d) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& v : d) v /= norm;
  return d;
}

}  // namespace

GeometrySummary local_geometry(const LossFunctional& loss, std::span<const double> theta,
                               const GeometryOptions& options) {
  if (theta.empty()) throw std::invalid_argument("local_geometry: empty parameter vector");
  if (options.directions == 0) throw std::invalid_argument("local_geometry: need directions");
  GeometrySummary g;
  g.base_loss = loss(theta);
  if (!std::isfinite(g.base_loss))
    throw std::invalid_argument("local_geometry: loss at the trained point is not finite");

  double norm = 0.0;
  for (double v : theta) norm += v * v;
  norm = std::sqrt(norm);
  g.radius = options.radius > 0.0 ? options.radius : (norm > 0.0 ? 0.05 * norm : 0.05);
  g.tau = options.tau > 0.0 ? options.tau : 0.05 * g.base_loss;

  const std::size_t dim = theta.size();
  std::vector<double> probe(dim);
  auto at = [&](const std::vector<double>& d, double step) {
    for (std::size_t i = 0; i < dim; ++i) probe[i] = theta[i] + step * d[i];
    return loss(probe);
  };

  Rng curvature_rng(mix_seed(options.seed, 20));
  std::vector<double> curvatures;
  for (std::size_t k = 0; k < options.directions; ++k) {
    const auto d = random_unit(curvature_rng, dim);
    const double plus = at(d, g.radius);
    const double minus = at(d, -g.radius);
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      ++g.discarded;
      continue;
    }
    curvatures.push_back((plus - 2.0 * g.base_loss + minus) / (g.radius * g.radius));
  }
  g.directions_used = curvatures.size();
  if (!curvatures.empty()) {
    double sum = 0.0;
    for (double c : curvatures) sum += c;
    g.curvature = sum / static_cast<double>(curvatures.size());
    double ss = 0.0;
    for (double c : curvatures) ss += (c - g.curvature) * (c - g.curvature);
    g.curvature_sd =
        curvatures.size() > 1 ? std::sqrt(ss / static_cast<double>(curvatures.size() - 1)) : 0.0;
  }

  Rng basin_rng(mix_seed(options.seed, 21));
  std::size_t inside = 0, valid = 0;
  for (std::size_t k = 0; k < 4 * options.directions; ++k) {
    const auto d = random_unit(basin_rng, dim);
    const double value = at(d, g.radius);
    if (!std::isfinite(value)) {
      ++g.discarded;
      continue;
    }
    ++valid;
    if (value <= g.base_loss + g.tau) ++inside;
  }
  g.basin_fraction = valid ? static_cast<double>(inside) / static_cast<double>(valid) : 0.0;
  return g;
}

LossFunctional model_loss_functional(const ModelParams& shape, const Matrix& features,
                                     const Matrix& targets) {
  return [params = ModelParams(shape), &features, &targets](std::span<const double> flat) mutable {
    params.assign(flat);
    return batch_loss(params, features, targets, SigmaVector(params.num_classes),
                      BaselineConfig{BaselineKind::BCE});
  };
}

void write_trajectory_csv(std::ostream& out, const TrajectorySeries& series) {
  out << "progress,mean,lo,hi\n";
  for (std::size_t g = 0; g < series.progress.size(); ++g) {
    put(out, series.progress[g]);
    out << ',';
    put(out, series.mean[g]);
    out << ',';
    put(out, series.ci_lo[g]);
    out << ',';
    put(out, series.ci_hi[g]);
    out << '\n';
  }
}

void write_kde_csv(std::ostream& out, const KdeCurve& curve) {
  out << "x,density\n";
  for (std::size_t g = 0; g < curve.grid.size(); ++g) {
    put(out, curve.grid[g]);
    out << ',';
    put(out, curve.density[g]);
    out << '\n';
  }
}

void write_surface_csv(std::ostream& out, const ScorePlaneSurface& surface) {
  out << "bin_x,bin_y,mean_loss,count\n";
  for (std::size_t bx = 0; bx < surface.bins; ++bx) {
    for (std::size_t by = 0; by < surface.bins; ++by) {
      out << bx << ',' << by << ',';
      if (surface.empty_cell(bx, by))
        out << "nan";
      else
        put(out, surface.loss_at(bx, by));
      out << ',' << surface.count_at(bx, by) << '\n';
    }
  }
}

void write_geometry_csv(std::ostream& out, std::span<const GeometryRow> rows) {
  out << "metric,value,ci_lo,ci_hi\n";
  for (const auto& r : rows) {
    out << r.metric << ',';
    put(out, r.stats.mean);
    out << ',';
    put(out, r.stats.ci_lo);
    out << ',';
    put(out, r.stats.ci_hi);
    out << '\n';
  }
}

}  // namespace csu
