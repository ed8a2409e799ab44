#pragma once

#include <string_view>

namespace csu {

enum class BaselineKind { BCE, SCE, BOOTSTRAP, RHO_DC };

std::string_view to_string(BaselineKind kind);
BaselineKind parse_baseline_kind(std::string_view text);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::BCE;
  double rho = 0.025;            // RHO_DC, in [0, 0.5)
  double bootstrap_beta = 0.95;  // BOOTSTRAP, in (0, 1]
  double sce_alpha = 1.0;
  double sce_beta = 1.0;

  /// Throws std::invalid_argument on an out-of-range hyperparameter.
  void validate() const;
  bool operator==(const BaselineConfig&) const = default;
};

struct LossAndGrad {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d logit
};

LossAndGrad plain_bce(double f, double y);

/// BCE against p' = (1 - rho) sigmoid(f) + rho (1 - sigmoid(f)), the
/// probability seen through a symmetric bit flip of rate rho.
LossAndGrad rho_corrected_loss(double f, double y, double rho);

/// BCE against y' = beta y + (1 - beta) sigmoid(f), with sigmoid(f) inside y'
/// treated as a constant for the gradient.
LossAndGrad bootstrap_loss(double f, double y, double beta);

/// alpha CE(y || p) + beta CE(p || clip(y)), clip range [1e-4, 1 - 1e-4].
LossAndGrad sce_loss(double f, double y, double alpha, double beta);

/// Per-entry loss under `config`.
LossAndGrad baseline_loss(const BaselineConfig& config, double f, double y);

}  // namespace csu
