#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "csu/baselines.hpp"
#include "csu/core.hpp"
#include "csu/csu_loss.hpp"
#include "csu/matrix.hpp"
#include "csu/metrics.hpp"

namespace csu {

/// Linear model when hidden_dim == 0 (w1/b1 empty), otherwise one ReLU
/// hidden layer.
struct ModelParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t num_classes = 0;
  Matrix w1;               // D x H
  std::vector<double> b1;  // H
  Matrix w2;               // H x C, or D x C when linear
  std::vector<double> b2;  // C

  static ModelParams zeros(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes);
  /// Glorot-uniform weights, zero biases.
  static ModelParams glorot(std::size_t input_dim, std::size_t hidden_dim,
                            std::size_t num_classes, std::uint64_t seed);

  bool linear() const noexcept { return hidden_dim == 0; }

  /// Trainable tensors in a fixed order: w1, b1, w2, b2 (w1, b1 omitted when linear).
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const ModelParams&) const = default;
};

/// Marks the CSU surrogate objective as the training loss.
struct CsuObjective {
  bool operator==(const CsuObjective&) const = default;
};

using LossSelector = std::variant<CsuObjective, BaselineConfig>;

std::string loss_name(const LossSelector& loss);
bool uses_sigma(const LossSelector& loss);

Matrix forward(const ModelParams& params, const Matrix& features);
Matrix predict_proba(const ModelParams& params, const Matrix& features);

struct Gradients {
  double loss = 0.0;
  ModelParams model;              // same shapes as the parameters
  std::vector<double> sigma_free; // empty unless the loss is CSU
};

/// Batch-mean loss of the selected objective.
double batch_loss(const ModelParams& params, const Matrix& features, const Matrix& targets,
                  const SigmaVector& sigmas, const LossSelector& loss);

/// Reverse-mode gradients of batch_loss for every trainable quantity.
Gradients backward(const ModelParams& params, const Matrix& features, const Matrix& targets,
                   const SigmaVector& sigmas, const LossSelector& loss);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam over `params`, tensor by tensor. Moments are created
/// zeroed on the first call.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state,
               double learning_rate, const AdamConfig& config = {});

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::size_t warmup_epochs = 20;
  std::size_t hidden_dim = 0;
  std::uint64_t seed = 0;
  LossSelector loss = CsuObjective{};

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_map = 0.0;
  double valid_roc_auc = 0.0;
  double valid_f1 = 0.0;
  double valid_acc = 0.0;
  std::vector<double> sigmas;  // empty unless CSU

  bool operator==(const EpochRecord&) const = default;
};

struct RunRecord {
  std::string loss;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_valid_map = 0.0;
  std::size_t clamp_events = 0;
  double wall_seconds = 0.0;  // not serialized; varies run to run

  /// Equality over everything except wall time.
  bool same_trajectory(const RunRecord& other) const;
};

struct TrainResult {
  ModelParams params;
  SigmaVector sigmas;
  RunRecord record;
};

/// Seeded mini-batch training with early stopping on validation mAP. Returns
/// the best-validation checkpoint; among tied epochs the latest one wins.
TrainResult train(const SplitBundles& data, const TrainConfig& config);

/// Epoch at which training stops for a given sequence of validation scores.
/// Exposed so the stopping rule can be tested on its own.
struct EarlyStopping {
  std::size_t patience;
  std::size_t warmup;
  std::size_t best_epoch = 0;
  double best_score = -1.0;

  /// Feeds one epoch's score; returns true when training should stop.
  bool update(std::size_t epoch, double score);
};

nlohmann::ordered_json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ModelParams& params, const SigmaVector& sigmas);
std::pair<ModelParams, SigmaVector> checkpoint_from_json(const nlohmann::json& j);

/// `run_<hash>_<seed>.json`
std::string run_file_name(const std::string& config_hash, std::uint64_t seed);

}  // namespace csu
