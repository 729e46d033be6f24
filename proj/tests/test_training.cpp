#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "cohconf/data_io.hpp"
#include "cohconf/error.hpp"
#include "cohconf/evaluation.hpp"
#include "cohconf/training.hpp"
#include "support/oracles.hpp"

using namespace cohconf;

namespace {

// Problems whose first feature equals the label, plus one noise feature.
std::vector<AdgProblem> separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AdgProblem> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = oracle::random_problem(rng, 3 + rng() % 5, 0.3, 0.25, 2);
    for (ClaimId v = 0; v < p.size(); ++v) {
      auto f = p.claim(v).features;
      f[0] = p.claim(v).label;
      p.set_features(v, f);
    }
    out.push_back(std::move(p));
  }
  return out;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.patience = std::min<std::size_t>(epochs, 10);
  c.seed = 5;
  return c;
}

}  // namespace

TEST(EpochSplit, Examples) {
  std::mt19937_64 rng(1);
  const auto s = epoch_split(10, 0.5, rng);
  EXPECT_EQ(s.cal.size(), 5u);
  EXPECT_EQ(s.pred.size(), 5u);
  std::set<std::size_t> all(s.cal.begin(), s.cal.end());
  all.insert(s.pred.begin(), s.pred.end());
  EXPECT_EQ(all.size(), 10u);

  const auto t = epoch_split(3, 0.5, rng);
  EXPECT_EQ(t.cal.size(), 1u);
  EXPECT_EQ(t.pred.size(), 2u);

  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 5; ++i) {
    const auto x = epoch_split(20, 0.3, a);
    const auto y = epoch_split(20, 0.3, b);
    EXPECT_EQ(x.cal, y.cal);
    EXPECT_EQ(x.pred, y.pred);
  }
  EXPECT_THROW(epoch_split(1, 0.5, rng), Error);
  const auto tiny = epoch_split(2, 0.1, rng);
  EXPECT_EQ(tiny.cal.size(), 1u);
}

TEST(Adam, ZeroGradientLeavesParams) {
  AdamState st(2);
  std::vector<double> p{1.0, -1.0};
  const std::vector<double> g{0.0, 0.0};
  adam_step(st, p, g);
  EXPECT_EQ(p, (std::vector<double>{1.0, -1.0}));
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepIsLearningRate) {
  AdamState st(1, 0.1);
  std::vector<double> p{0.0};
  const std::vector<double> g{1.0};
  adam_step(st, p, g);
  EXPECT_NEAR(p[0], -0.1 / (1 + 1e-8), 1e-15);
}

TEST(Adam, ConstantGradientDecreasesMonotonically) {
  AdamState st(1);
  std::vector<double> p{0.0};
  const std::vector<double> g{0.3};
  double prev = p[0];
  for (int i = 0; i < 1000; ++i) {
    adam_step(st, p, g);
    EXPECT_LT(p[0], prev);
    prev = p[0];
  }
}

TEST(Adam, Errors) {
  AdamState st(2);
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> short_g{1.0};
  EXPECT_THROW(adam_step(st, p, short_g), Error);
  const std::vector<double> nan_g{1.0, std::nan("")};
  try {
    adam_step(st, p, nan_g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteGradient);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.patience = 200;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.cal_fraction = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(LossAndGradient, MatchesFiniteDifferences) {
  const auto ps = separable(8, 3);
  const std::span<const AdgProblem> cal(ps.data(), 4), pred(ps.data() + 4, 4);
  ScorerParams sp{{0.4, -0.2}, 0.1, 0.0};
  const auto soft = SoftConfig::train_default();
  std::vector<double> grad;
  loss_and_gradient(cal, pred, sp, 0.3, soft, QuantileOrientation::Lower, grad);
  ASSERT_EQ(grad.size(), 3u);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 3; ++i) {
    auto up = sp, dn = sp;
    if (i < 2) {
      up.weights[i] += h;
      dn.weights[i] -= h;
    } else {
      up.bias += h;
      dn.bias -= h;
    }
    const double fd = (soft_validation_loss(cal, pred, up, 0.3, soft) - soft_validation_loss(cal, pred, dn, 0.3, soft)) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << i;
  }
}

TEST(TrainScorer, ZeroEpochsReturnsInit) {
  const auto ps = separable(10, 1);
  const ScorerParams init{{0.5, 0.25}, -0.5, 1.0};
  const auto r = train_scorer(std::span(ps).subspan(0, 7), std::span(ps).subspan(7), init, quick(0));
  EXPECT_EQ(r.scorer, init);
  EXPECT_TRUE(r.log.empty());
}

TEST(TrainScorer, ZeroLearningRateNeverMoves) {
  const auto ps = separable(12, 2);
  auto cfg = quick(5);
  cfg.learning_rate = 0.0;
  const auto r = train_scorer(std::span(ps).subspan(0, 9), std::span(ps).subspan(9), 2, cfg);
  EXPECT_EQ(r.scorer.weights, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(r.scorer.bias, 0.0);
  EXPECT_EQ(r.best_epoch, 0u);
}

TEST(TrainScorer, DeterministicAndBestSnapshot) {
  const auto ps = separable(40, 4);
  const auto train = std::span(ps).subspan(0, 30), val = std::span(ps).subspan(30);
  const auto a = train_scorer(train, val, 2, quick(15));
  const auto b = train_scorer(train, val, 2, quick(15));
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_metric, b.log[i].val_metric);
  }
  EXPECT_EQ(a.scorer, b.scorer);
  double best = soft_validation_loss(train, val, ScorerParams{{0, 0}, 0, 0}, 0.05, quick(1).soft);
  for (const auto& e : a.log) best = std::min(best, e.val_metric);
  EXPECT_DOUBLE_EQ(a.best_val_metric, best);
  EXPECT_NEAR(soft_validation_loss(train, val, a.scorer, 0.05, quick(1).soft), a.best_val_metric, 1e-9);
}

TEST(TrainScorer, LearnsASeparableSignal) {
  const auto ps = separable(120, 8);
  const auto train = std::span(ps).subspan(0, 90), test = std::span(ps).subspan(90);
  const auto r = train_scorer(train, test.subspan(0, 15), 2, quick(40));
  ASSERT_GT(r.scorer.weights[0], 0.0);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : test)
    for (const auto& c : p.claims()) {
      scores.push_back(r.scorer.score(c.features));
      labels.push_back(c.label);
    }
  // Early stopping on 15 problems halts after a few epochs, before the
  // noise feature's weight has decayed; chance level is 0.5.
  EXPECT_GT(auc(scores, labels), 0.8);
  // Hard CF retention on held-out problems beats the untrained scorer, whose
  // tied risks leave nothing below the calibrated threshold.
  auto retained_true = [&](const ScorerParams& sp) {
    std::vector<std::vector<double>> risks;
    for (const auto& p : train) risks.push_back(risk_scores(sp, p));
    const auto cal = hard_calibrate(train, risks, 0.05, 20.0);
    std::size_t kept_true = 0;
    for (const auto& p : test) {
      const auto rr = risk_scores(sp, p);
      for (ClaimId v : hard_predict(p, rr, build_tau_grid(rr, 20.0), cal.tau_hat).retained)
        kept_true += p.claim(v).label;
    }
    return kept_true;
  };
  EXPECT_GT(retained_true(r.scorer), retained_true(ScorerParams{{0, 0}, 0, 0}));
}

TEST(TrainScorer, Errors) {
  const auto ps = separable(3, 1);
  EXPECT_THROW(train_scorer(std::span(ps).subspan(0, 1), std::span(ps).subspan(1), 2, quick(3)), Error);
  EXPECT_THROW(train_scorer(std::span(ps).subspan(0, 2), std::span<const AdgProblem>{}, 2, quick(3)), Error);
}
