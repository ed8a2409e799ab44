#include <cmath>

#include <gtest/gtest.h>

#include "csu/core.hpp"
#include "csu/trainer.hpp"

using namespace csu;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

std::vector<LossSelector> all_losses() {
  BaselineConfig bce, sce, boot, rho;
  sce.kind = BaselineKind::SCE;
  sce.sce_alpha = 0.7;
  sce.sce_beta = 0.4;
  boot.kind = BaselineKind::BOOTSTRAP;
  boot.bootstrap_beta = 0.8;
  rho.kind = BaselineKind::RHO_DC;
  rho.rho = 0.1;
  return {CsuObjective{}, bce, sce, boot, rho};
}

SplitBundles small_data(double noise, std::uint64_t seed) {
  SynthSpec s;
  s.num_classes = 4;
  s.feature_dim = 8;
  s.train_per_class = 20;
  s.valid_per_class = 10;
  s.test_per_class = 10;
  s.noise_scale = noise;
  s.seed = seed;
  return generate_synthetic(s);
}

}  // namespace

TEST(Trainer, LinearForwardByHand) {
  auto p = ModelParams::zeros(2, 0, 2);
  p.w2 = Matrix(2, 2, std::vector<double>{1, 2, 3, 4});
  p.b2 = {0.5, -1};
  const Matrix x(1, 2, std::vector<double>{1, -1});
  const Matrix out = forward(p, x);
  EXPECT_EQ(out(0, 0), 1 - 3 + 0.5);
  EXPECT_EQ(out(0, 1), 2 - 4 - 1);
}

TEST(Trainer, MlpForwardByHand) {
  auto p = ModelParams::zeros(2, 2, 1);
  p.w1 = Matrix(2, 2, std::vector<double>{1, -1, 2, 1});
  p.b1 = {0.0, -0.5};
  p.w2 = Matrix(2, 1, std::vector<double>{1.5, -2});
  p.b2 = {0.25};
  const Matrix x(1, 2, std::vector<double>{1, 1});
  // hidden pre-activation: [3, -0.5] -> relu [3, 0]
  EXPECT_EQ(forward(p, x)(0, 0), 4.5 + 0.25);
  EXPECT_NEAR(predict_proba(p, x)(0, 0), 1 / (1 + std::exp(-4.75)), 1e-15);
  EXPECT_THROW(forward(p, Matrix(1, 3)), std::invalid_argument);
}

TEST(Trainer, GlorotIsSeededAndShaped) {
  const auto a = ModelParams::glorot(8, 5, 3, 1);
  EXPECT_EQ(a, ModelParams::glorot(8, 5, 3, 1));
  EXPECT_FALSE(a == ModelParams::glorot(8, 5, 3, 2));
  EXPECT_EQ(a.parameter_count(), 8u * 5 + 5 + 5 * 3 + 3);
  const double limit = std::sqrt(6.0 / 13.0);
  for (double w : a.w1.values()) EXPECT_LE(std::abs(w), limit);
  auto b = ModelParams::zeros(8, 5, 3);
  b.assign(a.flatten());
  EXPECT_EQ(a, b);
}

TEST(Trainer, BackwardMatchesFiniteDifferences) {
  const auto data = small_data(0.5, 3);
  const Matrix x = data.train.features;
  Matrix y = data.train.targets;
  y(0, 1) = 0.6;  // soft entry exercises the non-binary path
  std::vector<double> sig{0.7, 1.0, 1.4, 2.2};
  const auto sv = SigmaVector::from_sigmas(sig);
  for (std::size_t hidden : {0u, 6u}) {
    const auto params = ModelParams::glorot(8, hidden, 4, 9);
    for (const auto& loss : all_losses()) {
      const auto g = backward(params, x, y, sv, loss);
      EXPECT_NEAR(g.loss, batch_loss(params, x, y, sv, loss), 1e-12);
      // the bootstrapped target is held fixed, so differentiate BCE against it
      const auto* boot = std::get_if<BaselineConfig>(&loss);
      const bool frozen = boot && boot->kind == BaselineKind::BOOTSTRAP;
      Matrix y_eval = y;
      LossSelector loss_eval = loss;
      if (frozen) {
        const Matrix p = predict_proba(params, x);
        for (std::size_t k = 0; k < y.size(); ++k)
          y_eval.values()[k] = boot->bootstrap_beta * y.values()[k] + (1 - boot->bootstrap_beta) * p.values()[k];
        loss_eval = BaselineConfig{};
      }
      const auto theta = params.flatten();
      const auto grad = g.model.flatten();
      const double h = 1e-5;
      for (std::size_t k = 0; k < theta.size(); k += 3) {
        auto a = theta, b = theta;
        a[k] += h;
        b[k] -= h;
        auto pa = params, pb = params;
        pa.assign(a);
        pb.assign(b);
        const double fd =
            (batch_loss(pa, x, y_eval, sv, loss_eval) - batch_loss(pb, x, y_eval, sv, loss_eval)) / (2 * h);
        EXPECT_LT(rel_err(grad[k], fd), 1e-6) << loss_name(loss) << " k=" << k;
      }
      if (uses_sigma(loss)) {
        ASSERT_EQ(g.sigma_free.size(), 4u);
        for (std::size_t c = 0; c < 4; ++c) {
          auto a = sv, b = sv;
          a.free_params()[c] += h;
          b.free_params()[c] -= h;
          const double fd = (batch_loss(params, x, y, a, loss) - batch_loss(params, x, y, b, loss)) / (2 * h);
          EXPECT_LT(rel_err(g.sigma_free[c], fd), 1e-6);
        }
      } else {
        EXPECT_TRUE(g.sigma_free.empty());
      }
    }
  }
}

TEST(Trainer, AdamMatchesHandTrace) {
  std::vector<double> p{1.0, -2.0};
  const std::vector<std::vector<double>> grads{{0.5, -1.0}, {0.1, 2.0}, {-0.3, 0.0}};
  AdamState state;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> ref = p, m(2, 0), v(2, 0);
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    std::vector<std::span<double>> ps{std::span<double>(p)};
    std::vector<std::span<const double>> gs{std::span<const double>(grads[t - 1])};
    adam_step(ps, gs, state, lr);
    for (int i = 0; i < 2; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grads[t - 1][i];
      v[i] = b2 * v[i] + (1 - b2) * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    EXPECT_NEAR(p[0], ref[0], 1e-15);
    EXPECT_NEAR(p[1], ref[1], 1e-15);
  }
  EXPECT_EQ(state.step, 3u);
}

TEST(Trainer, AdamFirstStepAndZeroGradient) {
  std::vector<double> p{0.0, 0.0, 5.0};
  const std::vector<double> g{3.0, -0.001, 0.0};
  AdamState state;
  std::vector<std::span<double>> ps{std::span<double>(p)};
  std::vector<std::span<const double>> gs{std::span<const double>(g)};
  adam_step(ps, gs, state, 0.1);
  EXPECT_NEAR(p[0], -0.1, 1e-8);
  EXPECT_NEAR(p[1], 0.1, 1e-5);
  EXPECT_EQ(p[2], 5.0);
}

TEST(Trainer, EarlyStoppingRule) {
  EarlyStopping flat{10, 20};
  std::size_t stopped = 0;
  for (std::size_t e = 1; e <= 100 && !stopped; ++e)
    if (flat.update(e, 0.5)) stopped = e;
  EXPECT_EQ(stopped, 30u);

  EarlyStopping late{10, 20};
  stopped = 0;
  for (std::size_t e = 1; e <= 100 && !stopped; ++e)
    if (late.update(e, e <= 25 ? e / 100.0 : 0.0)) stopped = e;
  EXPECT_EQ(stopped, 35u);
  EXPECT_EQ(late.best_epoch, 25u);
}

TEST(Trainer, ConfigValidation) {
  TrainConfig c;
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  BaselineConfig b;
  b.rho = 0.7;
  b.kind = BaselineKind::RHO_DC;
  c.loss = b;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Trainer, NoiseFreeDataIsLearnedExactly) {
  SynthSpec s;
  s.noise_scale = 0.0;
  s.seed = 2;
  const auto data = generate_synthetic(s);
  for (const LossSelector& loss : {LossSelector{BaselineConfig{}}, LossSelector{CsuObjective{}}}) {
    TrainConfig tc;
    tc.learning_rate = 0.05;
    tc.loss = loss;
    const auto r = train(data, tc);
    const auto rep = evaluate(predict_proba(r.params, data.test.features), data.test.targets);
    EXPECT_EQ(rep.exact_match_acc, 1.0) << loss_name(loss);
    EXPECT_EQ(rep.map, 1.0);
  }
}

TEST(Trainer, CleanCsuSigmaStaysNearOne) {
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthSpec s;
    s.noise_scale = 0.35;
    s.valid_per_class = 40;
    s.test_per_class = 40;
    s.seed = 1000 + seed;
    TrainConfig tc;
    tc.hidden_dim = 64;
    tc.seed = seed;
    const auto r = train(generate_synthetic(s), tc);
    double mean = 0;
    for (double v : r.sigmas.sigmas()) mean += v / 10.0;
    inside += mean >= 0.8 && mean <= 1.2;
  }
  EXPECT_GE(inside, 6);
}

TEST(Trainer, TrainingIsDeterministic) {
  const auto data = small_data(0.4, 4);
  TrainConfig tc;
  tc.hidden_dim = 8;
  tc.max_epochs = 12;
  tc.seed = 3;
  const auto a = train(data, tc);
  const auto b = train(data, tc);
  EXPECT_TRUE(a.record.same_trajectory(b.record));
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.sigmas, b.sigmas);
  EXPECT_EQ(a.record.epochs.front().sigmas.size(), 4u);
  tc.seed = 4;
  EXPECT_FALSE(train(data, tc).record.same_trajectory(a.record));
}

TEST(Trainer, IdentityBaselinesReproduceBceTrajectory) {
  const auto data = small_data(0.5, 5);
  TrainConfig tc;
  tc.hidden_dim = 8;
  tc.max_epochs = 15;
  tc.loss = BaselineConfig{};
  const auto ref = train(data, tc);
  BaselineConfig rho, boot, sce;
  rho.kind = BaselineKind::RHO_DC;
  rho.rho = 0.0;
  boot.kind = BaselineKind::BOOTSTRAP;
  boot.bootstrap_beta = 1.0;
  sce.kind = BaselineKind::SCE;
  sce.sce_beta = 0.0;
  for (const auto& b : {rho, boot, sce}) {
    tc.loss = b;
    const auto r = train(data, tc);
    ASSERT_EQ(r.record.epochs.size(), ref.record.epochs.size());
    for (std::size_t e = 0; e < r.record.epochs.size(); ++e) {
      EXPECT_EQ(r.record.epochs[e].train_loss, ref.record.epochs[e].train_loss);
      EXPECT_EQ(r.record.epochs[e].valid_map, ref.record.epochs[e].valid_map);
    }
    EXPECT_EQ(r.params, ref.params);
  }
}

TEST(Trainer, RecordAndCheckpointJsonRoundTrip) {
  const auto data = small_data(0.4, 6);
  TrainConfig tc;
  tc.max_epochs = 5;
  const auto r = train(data, tc);
  const auto rec = run_record_from_json(nlohmann::json::parse(to_json(r.record).dump()));
  EXPECT_TRUE(rec.same_trajectory(r.record));
  const auto [params, sigmas] = checkpoint_from_json(nlohmann::json::parse(to_json(r.params, r.sigmas).dump()));
  EXPECT_EQ(params, r.params);
  EXPECT_EQ(sigmas, r.sigmas);
  EXPECT_EQ(run_file_name("abc", 7), "run_abc_7.json");
}
