#include "csu/csu_loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace csu {

namespace {

void require_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::domain_error("sigma must be positive and finite, got " + std::to_string(sigma));
}

}  // namespace

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double scaled_logit(double f, double sigma) {
  require_sigma(sigma);
  return f / (sigma * sigma);
}

namespace {

// softplus(z) - y z and sigmoid(z) - y, rewritten so neither cancels when
// |z| is large: softplus(z) - z = softplus(-z), 1 - sigmoid(z) = sigmoid(-z).
double bernoulli_nll(double z, double y) {
  if (y == 0.0) return softplus(z);
  if (y == 1.0) return softplus(-z);
  return y * softplus(-z) + (1.0 - y) * softplus(z);
}

double bernoulli_grad(double z, double y) {
  if (y == 0.0) return sigmoid(z);
  if (y == 1.0) return -sigmoid(-z);
  return (1.0 - y) * sigmoid(z) - y * sigmoid(-z);
}

}  // namespace

double exact_nll(double f, double y, double sigma) {
  return bernoulli_nll(scaled_logit(f, sigma), y);
}

double exact_nll_grad_f(double f, double y, double sigma) {
  return bernoulli_grad(scaled_logit(f, sigma), y) / (sigma * sigma);
}

double bce_unscaled(double f, double y) { return bernoulli_nll(f, y); }

double bce_grad_f(double f, double y) { return bernoulli_grad(f, y); }

double surrogate_loss(double f, double y, double sigma) {
  require_sigma(sigma);
  return bce_unscaled(f, y) / (sigma * sigma) + std::log1p(sigma);
}

double surrogate_grad_sigma(double f, double y, double sigma) {
  require_sigma(sigma);
  return -2.0 * bce_unscaled(f, y) / (sigma * sigma * sigma) + 1.0 / (sigma + 1.0);
}

double surrogate_grad_f(double f, double y, double sigma) {
  require_sigma(sigma);
  return bce_grad_f(f, y) / (sigma * sigma);
}

double PositiveMap::sigma(double s) { return std::exp(s); }
double PositiveMap::derivative(double s) { return std::exp(s); }
double PositiveMap::inverse(double sigma) {
  require_sigma(sigma);
  return std::log(sigma);
}

SigmaVector SigmaVector::from_sigmas(std::span<const double> sigmas) {
  SigmaVector v(sigmas.size());
  for (std::size_t i = 0; i < sigmas.size(); ++i) v.free_[i] = PositiveMap::inverse(sigmas[i]);
  return v;
}

std::vector<double> SigmaVector::sigmas() const {
  std::vector<double> out(free_.size());
  for (std::size_t i = 0; i < free_.size(); ++i) out[i] = sigma(i);
  return out;
}

std::size_t SigmaVector::clamp() {
  static const double lo = std::log(kMinSigma);
  static const double hi = std::log(kMaxSigma);
  std::size_t events = 0;
  for (double& s : free_) {
    if (s < lo) {
      s = lo;
      ++events;
    } else if (s > hi) {
      s = hi;
      ++events;
    }
  }
  return events;
}

ObjectiveResult total_objective(const Matrix& logits, const Matrix& targets,
                                const SigmaVector& sigmas) {
  require_same_shape(logits, targets, "total_objective");
  if (sigmas.size() != logits.cols())
    throw std::invalid_argument("total_objective: sigma count does not match class count");
  if (logits.rows() == 0) throw std::invalid_argument("total_objective: empty batch");

  const std::size_t N = logits.rows();
  const std::size_t C = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(N);

  std::vector<double> sigma(C), inv_sq(C), reg(C);
  for (std::size_t i = 0; i < C; ++i) {
    sigma[i] = sigmas.sigma(i);
    require_sigma(sigma[i]);
    inv_sq[i] = 1.0 / (sigma[i] * sigma[i]);
    reg[i] = std::log1p(sigma[i]);
  }

  ObjectiveResult out;
  out.grad_logits = Matrix(N, C);
  std::vector<double> per_sample(N);
  std::vector<std::vector<double>> bce_by_class(C, std::vector<double>(N));
  std::vector<double> terms(C);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < C; ++i) {
      const double f = logits(n, i);
      const double y = targets(n, i);
      const double L = bce_unscaled(f, y);
      bce_by_class[i][n] = L;
      terms[i] = L * inv_sq[i] + reg[i];
      out.grad_logits(n, i) = bce_grad_f(f, y) * inv_sq[i] * inv_n;
    }
    per_sample[n] = pairwise_sum(terms);
  }
  out.value = pairwise_sum(per_sample) * inv_n;

  out.grad_free_params.resize(C);
  const auto free = sigmas.free_params();
  for (std::size_t i = 0; i < C; ++i) {
    const double mean_bce = pairwise_sum(bce_by_class[i]) * inv_n;
    const double s = sigma[i];
    const double d_sigma = -2.0 * mean_bce / (s * s * s) + 1.0 / (s + 1.0);
    out.grad_free_params[i] = d_sigma * PositiveMap::derivative(free[i]);
  }
  return out;
}

double descend_sigma_fixed_loss(double loss, double sigma0, double learning_rate,
                                std::size_t max_steps, double tolerance) {
  if (!(loss >= 0.0)) throw std::domain_error("descend_sigma_fixed_loss: loss must be >= 0");
  require_sigma(sigma0);
  double s = PositiveMap::inverse(sigma0);
  for (std::size_t step = 0; step < max_steps; ++step) {
    const double sigma = PositiveMap::sigma(s);
    const double g = (-2.0 * loss / (sigma * sigma * sigma) + 1.0 / (sigma + 1.0)) *
                     PositiveMap::derivative(s);
    s -= learning_rate * g;
    if (std::abs(learning_rate * g) < tolerance) break;
  }
  return PositiveMap::sigma(s);
}

}  // namespace csu
