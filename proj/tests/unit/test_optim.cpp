#include <gtest/gtest.h>

#include <numbers>

#include "test_util.hpp"
#include "toad/optim.hpp"

namespace toad {
namespace {

using testing::random_tensor;

TEST(CeLoss, UniformLogitsGiveLogC) {
  Tensor<double> z({3, 5}, 0.25);
  const std::vector<int> y{0, 4, 2};
  EXPECT_NEAR(ce_loss(z, y, 1.7), std::log(5.0), 1e-12);
}

TEST(CeLoss, MatchesDirectFormula) {
  std::mt19937_64 rng(40);
  const auto z = random_tensor({4, 6}, rng, 0.3);
  const std::vector<int> y{1, 0, 5, 3};
  const double tau = 2.0;
  double want = 0;
  for (std::size_t b = 0; b < 4; ++b) {
    double denom = 0;
    for (std::size_t c = 0; c < 6; ++c) denom += std::exp(std::exp(tau) * z.at(b, c));
    want -= std::log(std::exp(std::exp(tau) * z.at(b, y[b])) / denom);
  }
  EXPECT_NEAR(ce_loss(z, y, tau), want / 4, 1e-9);
}

TEST(CeLoss, OutOfRangeLabelThrows) {
  Tensor<double> z({2, 3});
  EXPECT_THROW(ce_loss(z, std::vector<int>{0, 3}, 0.0), LabelError);
  EXPECT_THROW(ce_loss(z, std::vector<int>{-1, 0}, 0.0), LabelError);
}

TEST(TotalLoss, ZeroLambdaIsCurrentTermExactly) {
  std::mt19937_64 rng(41);
  const auto z = random_tensor({3, 4}, rng), zf = random_tensor({3, 4}, rng);
  const std::vector<int> y{0, 1, 2}, yf{3, 2, 1};
  LossConfig cfg;
  cfg.lambda = 0.0;
  EXPECT_EQ(total_loss(z, &zf, y, &yf, cfg), ce_loss(z, y, cfg.tau));
}

TEST(TotalLoss, EqualTermsWithDefaultLambda) {
  std::mt19937_64 rng(42);
  const auto z = random_tensor({3, 4}, rng);
  const std::vector<int> y{0, 1, 2};
  LossConfig cfg;
  EXPECT_EQ(cfg.lambda, 0.5);
  const double l0 = ce_loss(z, y, cfg.tau);
  EXPECT_NEAR(total_loss(z, &z, y, &y, cfg), 1.5 * l0, 1e-12);
}

TEST(TotalLoss, UndefinedFutureRowsAreMasked) {
  std::mt19937_64 rng(43);
  const auto z = random_tensor({3, 4}, rng), zf = random_tensor({3, 4}, rng);
  const std::vector<int> y{0, 1, 2}, yf{3, kNoLabel, 1};
  LossConfig cfg;
  Tensor<double> kept({2, 4});
  for (std::size_t c = 0; c < 4; ++c) {
    kept.at(0, c) = zf.at(0, c);
    kept.at(1, c) = zf.at(2, c);
  }
  const double want = ce_loss(z, y, cfg.tau) + 0.5 * ce_loss(kept, std::vector<int>{3, 1}, cfg.tau);
  EXPECT_NEAR(total_loss(z, &zf, y, &yf, cfg), want, 1e-12);
}

TEST(TotalLoss, InconsistentFuturePresenceIsConfigError) {
  Tensor<double> z({1, 2});
  const std::vector<int> y{0};
  EXPECT_THROW(total_loss(z, &z, y, nullptr, LossConfig{}), ConfigError);
  EXPECT_THROW(total_loss<double>(z, nullptr, y, &y, LossConfig{}), ConfigError);
}

struct ScalarAdamW {
  double p, m = 0, v = 0;
  std::uint64_t t = 0;
  void step(double g, double lr, const AdamWConfig& c) {
    ++t;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mhat = m / (1 - std::pow(c.beta1, static_cast<double>(t)));
    const double vhat = v / (1 - std::pow(c.beta2, static_cast<double>(t)));
    p = p - lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * p);
  }
};

TEST(AdamW, ScalarTrajectoryMatchesReference) {
  AdamWConfig cfg;
  cfg.lr_base = 1e-2;
  ScalarAdamW ref{0.7};
  std::vector<double> p{0.7}, m{0}, v{0};
  const double grads[] = {0.3, -1.2, 0.05, 2.0, -0.4, 0.0, 0.9, -0.01};
  std::uint64_t step = 0;
  for (double g : grads) {
    const double lr = 1e-2 * (1.0 + 0.1 * static_cast<double>(step));
    ref.step(g, lr, cfg);
    const std::vector<double> gv{g};
    adamw_update<double>(p, gv, m, v, ++step, lr, cfg);
    EXPECT_NEAR(p[0], ref.p, 1e-10) << "step " << step;
  }
}

TEST(AdamW, ZeroGradientZeroDecayLeavesParams) {
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<double> p{1.5, -2.0}, g{0, 0}, m{0, 0}, v{0, 0};
  adamw_update<double>(p, g, m, v, 1, 1e-3, cfg);
  EXPECT_EQ(p, (std::vector<double>{1.5, -2.0}));
}

TEST(AdamW, ZeroGradientScalesByDecoupledDecay) {
  AdamWConfig cfg;
  const double lr = 3e-3;
  std::vector<double> p{1.5, -2.0}, g{0, 0}, m{0, 0}, v{0, 0};
  adamw_update<double>(p, g, m, v, 1, lr, cfg);
  EXPECT_NEAR(p[0], 1.5 * (1 - lr * 0.2), 1e-15);
  EXPECT_NEAR(p[1], -2.0 * (1 - lr * 0.2), 1e-15);
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.dim = 8;
  cfg.window = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.classes = 3;
  return cfg;
}

TEST(AdamW, StepNeverTouchesFrozenTensors) {
  const auto cfg = small_config();
  std::mt19937_64 rng(44);
  auto name = random_tensor<float>({3, 8}, rng), prompt = random_tensor<float>({3, 8}, rng),
       fut = random_tensor<float>({3, 8}, rng);
  auto params = init_params(cfg, build_classifier(name, prompt, &fut, cfg.classifier_mode), 1);
  const auto before = params.frozen_checksum();
  const auto current = params.classifier.current;
  auto state = OptimState<float>::init(params, AdamWConfig{});
  auto grads = Gradients<float>::zeros_like(params);
  for (auto& g : grads.tensors) g.fill(0.5f);
  for (int i = 0; i < 3; ++i) adamw_step(params, grads, state, 1e-2);
  EXPECT_EQ(params.frozen_checksum(), before);
  EXPECT_EQ(params.classifier.current, current);
  EXPECT_EQ(state.step, 3u);
  EXPECT_NE(params.blocks[0].wq, init_params(cfg, params.classifier, 1).blocks[0].wq);
}

TEST(AdamW, NonFiniteGradientNamesStep) {
  const auto cfg = small_config();
  std::mt19937_64 rng(45);
  auto t = random_tensor<float>({3, 8}, rng);
  auto params = init_params(cfg, build_classifier(t, t, &t, cfg.classifier_mode), 1);
  auto state = OptimState<float>::init(params, AdamWConfig{});
  auto grads = Gradients<float>::zeros_like(params);
  adamw_step(params, grads, state, 1e-3);
  grads.tensors[2][0] = NAN;
  try {
    adamw_step(params, grads, state, 1e-3);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos) << e.what();
  }
}

TEST(Schedule, BoundaryValues) {
  AdamWConfig cfg;
  const double base = cfg.lr_base;
  EXPECT_EQ(lr_at(0.0, cfg), 0.0);
  EXPECT_NEAR(lr_at(2.5, cfg), base / 2, 1e-18);
  EXPECT_EQ(lr_at(5.0, cfg), base);
  EXPECT_NEAR(lr_at(17.5, cfg), base / 2, 1e-12);
  EXPECT_NEAR(lr_at(30.0, cfg), 0.0, 1e-12);
}

// Jumps are measured beyond what the steepest segment allows over one grid step.
TEST(Schedule, ContinuousOnTheWholeRange) {
  AdamWConfig cfg;
  const double h = 1e-4;
  const double slope = std::max(cfg.lr_base / cfg.warmup_epochs,
                                cfg.lr_base * std::numbers::pi / 2 /
                                    (cfg.total_epochs - cfg.warmup_epochs));
  double excess = 0, prev = lr_at(0.0, cfg);
  for (int i = 1; i <= 300000; ++i) {
    const double lr = lr_at(i * h, cfg);
    excess = std::max(excess, std::abs(lr - prev) - slope * h);
    prev = lr;
  }
  EXPECT_LT(excess, 1e-6 * cfg.lr_base);
  EXPECT_NEAR(lr_at(5.0 - 1e-12, cfg), lr_at(5.0 + 1e-12, cfg), 1e-6 * cfg.lr_base);
}

TEST(Schedule, InvalidConfigRejected) {
  AdamWConfig cfg;
  cfg.warmup_epochs = 30;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace toad
