#include "csu/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "csu/csu_loss.hpp"

namespace csu {

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::BCE: return "BCE";
    case BaselineKind::SCE: return "SCE";
    case BaselineKind::BOOTSTRAP: return "BOOTSTRAP";
    case BaselineKind::RHO_DC: return "RHO_DC";
  }
  return "?";
}

BaselineKind parse_baseline_kind(std::string_view text) {
  if (text == "BCE") return BaselineKind::BCE;
  if (text == "SCE") return BaselineKind::SCE;
  if (text == "BOOTSTRAP") return BaselineKind::BOOTSTRAP;
  if (text == "RHO_DC") return BaselineKind::RHO_DC;
  throw std::invalid_argument("unknown baseline loss '" + std::string(text) + "'");
}

void BaselineConfig::validate() const {
  if (!(rho >= 0.0 && rho < 0.5)) throw std::invalid_argument("rho must lie in [0, 0.5)");
  if (!(bootstrap_beta > 0.0 && bootstrap_beta <= 1.0))
    throw std::invalid_argument("bootstrap beta must lie in (0, 1]");
  if (!(sce_alpha >= 0.0) || !(sce_beta >= 0.0))
    throw std::invalid_argument("SCE weights must be nonnegative");
}

LossAndGrad plain_bce(double f, double y) { return {bce_unscaled(f, y), bce_grad_f(f, y)}; }

LossAndGrad rho_corrected_loss(double f, double y, double rho) {
  if (!(rho >= 0.0 && rho < 0.5)) throw std::invalid_argument("rho must lie in [0, 0.5)");
  if (rho == 0.0) return plain_bce(f, y);
  const double p = sigmoid(f);
  const double q = sigmoid(-f);  // 1 - p without cancellation
  const double p_corr = rho + (1.0 - 2.0 * rho) * p;
  const double q_corr = rho + (1.0 - 2.0 * rho) * q;
  const double loss = -y * std::log(p_corr) - (1.0 - y) * std::log(q_corr);
  // dp'/df = (1 - 2 rho) p q
  const double grad = (1.0 - 2.0 * rho) * p * q * ((1.0 - y) / q_corr - y / p_corr);
  return {loss, grad};
}

LossAndGrad bootstrap_loss(double f, double y, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in (0, 1]");
  const double p = sigmoid(f);
  const double mixed = beta * y + (1.0 - beta) * p;
  return {bce_unscaled(f, mixed), bce_grad_f(f, mixed)};
}

LossAndGrad sce_loss(double f, double y, double alpha, double beta) {
  constexpr double kClip = 1e-4;
  const double p = sigmoid(f);
  const double q = sigmoid(-f);
  const double yc = std::clamp(y, kClip, 1.0 - kClip);
  const double log_y = std::log(yc);
  const double log_1my = std::log1p(-yc);
  const double reverse = -p * log_y - q * log_1my;
  const double reverse_grad = p * q * (log_1my - log_y);
  return {alpha * bce_unscaled(f, y) + beta * reverse,
          alpha * bce_grad_f(f, y) + beta * reverse_grad};
}

LossAndGrad baseline_loss(const BaselineConfig& config, double f, double y) {
  switch (config.kind) {
    case BaselineKind::BCE: return plain_bce(f, y);
    case BaselineKind::SCE: return sce_loss(f, y, config.sce_alpha, config.sce_beta);
    case BaselineKind::BOOTSTRAP: return bootstrap_loss(f, y, config.bootstrap_beta);
    case BaselineKind::RHO_DC: return rho_corrected_loss(f, y, config.rho);
  }
  throw std::logic_error("unhandled baseline kind");
}

}  // namespace csu
