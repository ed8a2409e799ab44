#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "csu/matrix.hpp"

namespace csu {

/// log(1 + exp(x)) without overflow.
double softplus(double x);
double sigmoid(double x);

/// f / sigma^2. Throws std::domain_error unless sigma > 0.
double scaled_logit(double f, double sigma);

/// Exact negative log-likelihood of a Bernoulli target under the scaled logit.
/// Kept for verification; training uses the surrogate below.
double exact_nll(double f, double y, double sigma);
/// d exact_nll / df = (sigmoid(f / sigma^2) - y) / sigma^2.
double exact_nll_grad_f(double f, double y, double sigma);

/// Binary cross-entropy on the raw logit.
double bce_unscaled(double f, double y);
/// d bce_unscaled / df.
double bce_grad_f(double f, double y);

/// bce_unscaled(f, y) / sigma^2 + log(sigma + 1).
double surrogate_loss(double f, double y, double sigma);
/// -2 bce_unscaled(f, y) / sigma^3 + 1 / (sigma + 1).
double surrogate_grad_sigma(double f, double y, double sigma);
/// (sigmoid(f) - y) / sigma^2. The logit enters unscaled.
double surrogate_grad_f(double f, double y, double sigma);

/// sigma = exp(s). positive_map(0) == 1.
struct PositiveMap {
  static double sigma(double s);
  static double derivative(double s);
  static double inverse(double sigma);
};

/// Learnable per-class unreliability scalars, stored as free parameters.
class SigmaVector {
public:
  static constexpr double kMinSigma = 1e-3;
  static constexpr double kMaxSigma = 1e3;

  SigmaVector() = default;
  /// All sigma = 1 (free parameters 0).
  explicit SigmaVector(std::size_t num_classes) : free_(num_classes, 0.0) {}
  static SigmaVector from_sigmas(std::span<const double> sigmas);

  std::size_t size() const noexcept { return free_.size(); }
  double sigma(std::size_t i) const { return PositiveMap::sigma(free_[i]); }
  std::vector<double> sigmas() const;

  std::span<double> free_params() noexcept { return free_; }
  std::span<const double> free_params() const noexcept { return free_; }

  /// Clamps every sigma into [kMinSigma, kMaxSigma]. Returns how many entries
  /// were clamped.
  std::size_t clamp();

  bool operator==(const SigmaVector&) const = default;

private:
  std::vector<double> free_;
};

struct ObjectiveResult {
  double value = 0.0;
  Matrix grad_logits;                  // N x C, already divided by N
  std::vector<double> grad_free_params;  // one per class
};

/// Batch mean over samples of the per-sample sum of surrogate terms, with
/// gradients for the logits and for the sigma free parameters.
ObjectiveResult total_objective(const Matrix& logits, const Matrix& targets,
                                const SigmaVector& sigmas);

/// Gradient descent on the free parameter of a single sigma with the per-class
/// loss held at `loss`. Returns the final sigma.
double descend_sigma_fixed_loss(double loss, double sigma0 = 1.0, double learning_rate = 0.05,
                                std::size_t max_steps = 100000, double tolerance = 1e-13);

}  // namespace csu
