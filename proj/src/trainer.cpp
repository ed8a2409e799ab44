#include "csu/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "csu/random.hpp"

namespace csu {

ModelParams ModelParams::zeros(std::size_t input_dim, std::size_t hidden_dim,
                               std::size_t num_classes) {
  ModelParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.num_classes = num_classes;
  if (hidden_dim > 0) {
    p.w1 = Matrix(input_dim, hidden_dim);
    p.b1.assign(hidden_dim, 0.0);
    p.w2 = Matrix(hidden_dim, num_classes);
  } else {
    p.w2 = Matrix(input_dim, num_classes);
  }
  p.b2.assign(num_classes, 0.0);
  return p;
}

ModelParams ModelParams::glorot(std::size_t input_dim, std::size_t hidden_dim,
                                std::size_t num_classes, std::uint64_t seed) {
  ModelParams p = zeros(input_dim, hidden_dim, num_classes);
  Rng rng(mix_seed(seed, 10));
  auto fill = [&](Matrix& w) {
    const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (double& v : w.values()) v = rng.uniform(-a, a);
  };
  if (hidden_dim > 0) fill(p.w1);
  fill(p.w2);
  return p;
}

std::vector<std::span<double>> ModelParams::tensors() {
  std::vector<std::span<double>> out;
  if (!linear()) {
    out.emplace_back(w1.values());
    out.emplace_back(b1);
  }
  out.emplace_back(w2.values());
  out.emplace_back(b2);
  return out;
}

std::vector<std::span<const double>> ModelParams::tensors() const {
  std::vector<std::span<const double>> out;
  if (!linear()) {
    out.emplace_back(w1.values());
    out.emplace_back(b1);
  }
  out.emplace_back(w2.values());
  out.emplace_back(b2);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto t : tensors()) n += t.size();
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (auto t : tensors()) out.insert(out.end(), t.begin(), t.end());
  return out;
}

void ModelParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count())
    throw std::invalid_argument("ModelParams::assign: size mismatch");
  std::size_t offset = 0;
  for (auto t : tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
    offset += t.size();
  }
}

std::string loss_name(const LossSelector& loss) {
  if (std::holds_alternative<CsuObjective>(loss)) return "CSU";
  return std::string(to_string(std::get<BaselineConfig>(loss).kind));
}

bool uses_sigma(const LossSelector& loss) { return std::holds_alternative<CsuObjective>(loss); }

namespace {

// out = a * b + bias (row-broadcast)
Matrix affine(const Matrix& a, const Matrix& b, std::span<const double> bias) {
  if (a.cols() != b.rows()) throw std::invalid_argument("forward: shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto o = out.row(r);
    std::copy(bias.begin(), bias.end(), o.begin());
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(r, k);
      if (av == 0.0) continue;
      auto br = b.row(k);
      for (std::size_t c = 0; c < b.cols(); ++c) o[c] += av * br[c];
    }
  }
  return out;
}

// grad_w += a^T g ; grad_b += column sums of g
void accumulate_affine_grads(const Matrix& a, const Matrix& g, Matrix& grad_w,
                             std::vector<double>& grad_b) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto gr = g.row(r);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(r, k);
      if (av == 0.0) continue;
      auto wr = grad_w.row(k);
      for (std::size_t c = 0; c < g.cols(); ++c) wr[c] += av * gr[c];
    }
    for (std::size_t c = 0; c < g.cols(); ++c) grad_b[c] += gr[c];
  }
}

struct Activations {
  Matrix pre;     // X W1 + b1
  Matrix hidden;  // relu(pre)
  Matrix logits;
};

void check_input(const ModelParams& params, const Matrix& features) {
  if (features.cols() != params.input_dim)
    throw std::invalid_argument("forward: feature dimension " + std::to_string(features.cols()) +
                                " does not match model input " +
                                std::to_string(params.input_dim));
}

Activations run_forward(const ModelParams& params, const Matrix& features) {
  check_input(params, features);
  Activations act;
  if (params.linear()) {
    act.logits = affine(features, params.w2, params.b2);
    return act;
  }
  act.pre = affine(features, params.w1, params.b1);
  act.hidden = act.pre;
  for (double& v : act.hidden.values()) v = std::max(v, 0.0);
  act.logits = affine(act.hidden, params.w2, params.b2);
  return act;
}

struct LossEval {
  double value;
  Matrix grad_logits;
  std::vector<double> sigma_free;
};

LossEval evaluate_loss(const Matrix& logits, const Matrix& targets, const SigmaVector& sigmas,
                       const LossSelector& loss) {
  require_same_shape(logits, targets, "loss");
  if (uses_sigma(loss)) {
    auto r = total_objective(logits, targets, sigmas);
    return {r.value, std::move(r.grad_logits), std::move(r.grad_free_params)};
  }
  const auto& cfg = std::get<BaselineConfig>(loss);
  const std::size_t N = logits.rows();
  const std::size_t C = logits.cols();
  if (N == 0) throw std::invalid_argument("loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(N);
  LossEval out{0.0, Matrix(N, C), {}};
  std::vector<double> per_sample(N), terms(C);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto lg = baseline_loss(cfg, logits(n, c), targets(n, c));
      terms[c] = lg.loss;
      out.grad_logits(n, c) = lg.grad * inv_n;
    }
    per_sample[n] = pairwise_sum(terms);
  }
  out.value = pairwise_sum(per_sample) * inv_n;
  return out;
}

}  // namespace

Matrix forward(const ModelParams& params, const Matrix& features) {
  return run_forward(params, features).logits;
}

Matrix predict_proba(const ModelParams& params, const Matrix& features) {
  Matrix p = forward(params, features);
  for (double& v : p.values()) v = sigmoid(v);
  return p;
}

double batch_loss(const ModelParams& params, const Matrix& features, const Matrix& targets,
                  const SigmaVector& sigmas, const LossSelector& loss) {
  return evaluate_loss(forward(params, features), targets, sigmas, loss).value;
}

Gradients backward(const ModelParams& params, const Matrix& features, const Matrix& targets,
                   const SigmaVector& sigmas, const LossSelector& loss) {
  if (features.rows() != targets.rows())
    throw std::invalid_argument("backward: feature and target row counts differ");
  if (targets.cols() != params.num_classes)
    throw std::invalid_argument("backward: target columns do not match model classes");
  const Activations act = run_forward(params, features);
  LossEval le = evaluate_loss(act.logits, targets, sigmas, loss);

  Gradients g;
  g.loss = le.value;
  g.sigma_free = std::move(le.sigma_free);
  g.model = ModelParams::zeros(params.input_dim, params.hidden_dim, params.num_classes);
  if (params.linear()) {
    accumulate_affine_grads(features, le.grad_logits, g.model.w2, g.model.b2);
    return g;
  }
  accumulate_affine_grads(act.hidden, le.grad_logits, g.model.w2, g.model.b2);
  // d hidden = G W2^T, masked by the ReLU
  Matrix d_pre(features.rows(), params.hidden_dim);
  for (std::size_t r = 0; r < features.rows(); ++r) {
    auto gr = le.grad_logits.row(r);
    for (std::size_t h = 0; h < params.hidden_dim; ++h) {
      if (act.pre(r, h) <= 0.0) continue;
      auto w = params.w2.row(h);
      double s = 0.0;
      for (std::size_t c = 0; c < params.num_classes; ++c) s += gr[c] * w[c];
      d_pre(r, h) = s;
    }
  }
  accumulate_affine_grads(features, d_pre, g.model.w1, g.model.b1);
  return g;
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state,
               double learning_rate, const AdamConfig& config) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter and gradient lists differ");
  if (state.first.empty()) {
    for (auto p : params) {
      state.first.emplace_back(p.size(), 0.0);
      state.second.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first.size() != params.size())
    throw std::invalid_argument("adam_step: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto g = grads[k];
    auto& m = state.first[k];
    auto& v = state.second[k];
    if (p.size() != g.size() || p.size() != m.size())
      throw std::invalid_argument("adam_step: tensor size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (patience == 0) throw std::invalid_argument("patience must be positive");
  if (const auto* b = std::get_if<BaselineConfig>(&loss)) b->validate();
}

bool EarlyStopping::update(std::size_t epoch, double score) {
  if (score > best_score) {
    best_score = score;
    best_epoch = epoch;
  }
  if (epoch <= warmup) return false;
  return epoch - std::max(best_epoch, warmup) >= patience;
}

bool RunRecord::same_trajectory(const RunRecord& o) const {
  return loss == o.loss && seed == o.seed && epochs == o.epochs && best_epoch == o.best_epoch &&
         best_valid_map == o.best_valid_map && clamp_events == o.clamp_events;
}

TrainResult train(const SplitBundles& data, const TrainConfig& config) {
  config.validate();
  const auto& tr = data.train;
  const auto& va = data.valid;
  if (tr.num_samples() == 0 || va.num_samples() == 0)
    throw std::invalid_argument("train: empty split");
  if (tr.feature_dim() != va.feature_dim() || tr.num_classes() != va.num_classes())
    throw std::invalid_argument("train: train and valid shapes disagree");

  const auto started = std::chrono::steady_clock::now();
  const std::size_t N = tr.num_samples();
  const std::size_t C = tr.num_classes();
  const bool csu = uses_sigma(config.loss);

  ModelParams params = ModelParams::glorot(tr.feature_dim(), config.hidden_dim, C, config.seed);
  SigmaVector sigmas(C);
  AdamState adam;
  Rng shuffle_rng(mix_seed(config.seed, 11));
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult best{params, sigmas, {}};
  RunRecord& rec = best.record;
  rec.loss = loss_name(config.loss);
  rec.seed = config.seed;
  EarlyStopping stopper{config.patience, config.warmup_epochs};

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < N; start += config.batch_size) {
      const std::size_t end = std::min(N, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix xb = gather_rows(tr.features, idx);
      const Matrix yb = gather_rows(tr.targets, idx);
      Gradients g = backward(params, xb, yb, sigmas, config.loss);
      loss_sum += g.loss * static_cast<double>(idx.size());

      auto p_tensors = params.tensors();
      const auto g_tensors_const = std::as_const(g.model).tensors();
      std::vector<std::span<const double>> g_tensors(g_tensors_const.begin(),
                                                     g_tensors_const.end());
      if (csu) {
        p_tensors.emplace_back(sigmas.free_params());
        g_tensors.emplace_back(g.sigma_free);
      }
      adam_step(p_tensors, g_tensors, adam, config.learning_rate);
      if (csu) rec.clamp_events += sigmas.clamp();
    }

    const MetricReport val = evaluate(predict_proba(params, va.features), va.targets);
    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = loss_sum / static_cast<double>(N);
    er.valid_map = val.map;
    er.valid_roc_auc = val.roc_auc_macro;
    er.valid_f1 = val.f1_micro;
    er.valid_acc = val.exact_match_acc;
    if (csu) er.sigmas = sigmas.sigmas();
    rec.epochs.push_back(std::move(er));

    // ties go to the later, longer-trained epoch; only strict gains reset patience
    const bool keep = val.map >= stopper.best_score;
    const bool stop = stopper.update(epoch, val.map);
    if (keep) {
      best.params = params;
      best.sigmas = sigmas;
      rec.best_epoch = epoch;
      rec.best_valid_map = val.map;
    }
    if (stop) break;
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return best;
}

nlohmann::ordered_json to_json(const RunRecord& record) {
  nlohmann::ordered_json j;
  j["loss"] = record.loss;
  j["seed"] = record.seed;
  j["best_epoch"] = record.best_epoch;
  j["best_valid_map"] = record.best_valid_map;
  j["clamp_events"] = record.clamp_events;
  auto& epochs = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : record.epochs) {
    nlohmann::ordered_json je;
    je["epoch"] = e.epoch;
    je["train_loss"] = e.train_loss;
    je["valid_map"] = e.valid_map;
    je["valid_roc_auc"] = e.valid_roc_auc;
    je["valid_f1"] = e.valid_f1;
    je["valid_acc"] = e.valid_acc;
    if (!e.sigmas.empty()) je["sigma"] = e.sigmas;
    epochs.push_back(std::move(je));
  }
  return j;
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.loss = j.at("loss").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.best_valid_map = j.at("best_valid_map").get<double>();
  r.clamp_events = j.at("clamp_events").get<std::size_t>();
  for (const auto& je : j.at("epochs")) {
    EpochRecord e;
    e.epoch = je.at("epoch").get<std::size_t>();
    e.train_loss = je.at("train_loss").get<double>();
    e.valid_map = je.at("valid_map").get<double>();
    e.valid_roc_auc = je.at("valid_roc_auc").get<double>();
    e.valid_f1 = je.at("valid_f1").get<double>();
    e.valid_acc = je.at("valid_acc").get<double>();
    if (je.contains("sigma")) e.sigmas = je.at("sigma").get<std::vector<double>>();
    r.epochs.push_back(std::move(e));
  }
  return r;
}

nlohmann::ordered_json to_json(const ModelParams& params, const SigmaVector& sigmas) {
  nlohmann::ordered_json j;
  j["input_dim"] = params.input_dim;
  j["hidden_dim"] = params.hidden_dim;
  j["num_classes"] = params.num_classes;
  j["parameters"] = params.flatten();
  j["sigma_free"] = std::vector<double>(sigmas.free_params().begin(), sigmas.free_params().end());
  return j;
}

std::pair<ModelParams, SigmaVector> checkpoint_from_json(const nlohmann::json& j) {
  auto params = ModelParams::zeros(j.at("input_dim").get<std::size_t>(),
                                   j.at("hidden_dim").get<std::size_t>(),
                                   j.at("num_classes").get<std::size_t>());
  params.assign(j.at("parameters").get<std::vector<double>>());
  const auto free = j.at("sigma_free").get<std::vector<double>>();
  SigmaVector sigmas(free.size());
  std::copy(free.begin(), free.end(), sigmas.free_params().begin());
  return {std::move(params), std::move(sigmas)};
}

std::string run_file_name(const std::string& config_hash, std::uint64_t seed) {
  return "run_" + config_hash + "_" + std::to_string(seed) + ".json";
}

}  // namespace csu
