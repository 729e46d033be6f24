#include "cohconf/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cohconf/autodiff.hpp"
#include "cohconf/error.hpp"

namespace cohconf {

void adam_step(AdamState& state, std::vector<double>& params, std::span<const double> grads) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::InvalidArgument, "adam state, parameters and gradients must have equal length");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient passed to adam");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

void TrainConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0,1)");
  if (!(cal_fraction > 0.0 && cal_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "cal_fraction must lie in (0,1)");
  }
  if (patience > epochs && epochs > 0) throw Error(ErrorCode::InvalidConfig, "patience must not exceed epochs");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "learning rate must be finite and non-negative");
  }
  soft.validate();
}

EpochSplit epoch_split(std::size_t n, double cal_fraction, std::mt19937_64& rng) {
  if (n < 2) throw Error(ErrorCode::TooFewProblems, "an epoch split needs at least 2 problems");
  if (!(cal_fraction > 0.0 && cal_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "cal_fraction must lie in (0,1)");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_cal = static_cast<std::size_t>(std::floor(static_cast<double>(n) * cal_fraction));
  n_cal = std::clamp<std::size_t>(n_cal, 1, n - 1);
  EpochSplit out;
  out.cal.assign(idx.begin(), idx.begin() + static_cast<long>(n_cal));
  out.pred.assign(idx.begin() + static_cast<long>(n_cal), idx.end());
  return out;
}

namespace {

std::vector<AdgProblem> pick(std::span<const AdgProblem> all, const std::vector<std::size_t>& idx) {
  std::vector<AdgProblem> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

// Affine map from standardized parameters to raw ones:
// w_j = u_j / s_j, b = c - sum_j u_j m_j / s_j.
struct FeatureScaling {
  std::vector<double> mean;
  std::vector<double> scale;
};

FeatureScaling feature_scaling(std::span<const AdgProblem> train, std::size_t n, bool enabled) {
  FeatureScaling fs{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  if (!enabled) return fs;
  std::vector<double> sum(n, 0.0), sq(n, 0.0);
  double count = 0.0;
  for (const auto& p : train) {
    for (const auto& c : p.claims()) {
      if (c.features.size() != n) {
        throw Error(ErrorCode::SchemaMismatch, "claim feature length differs from the scorer in '" + p.id() + "'");
      }
      for (std::size_t j = 0; j < n; ++j) {
        sum[j] += c.features[j];
        sq[j] += c.features[j] * c.features[j];
      }
      count += 1.0;
    }
  }
  if (count == 0.0) return fs;
  for (std::size_t j = 0; j < n; ++j) {
    const double mu = sum[j] / count;
    const double var = std::max(0.0, sq[j] / count - mu * mu);
    const double sd = std::sqrt(var);
    if (sd > 1e-12) {
      fs.mean[j] = mu;
      fs.scale[j] = sd;
    }
  }
  return fs;
}

}  // namespace

double soft_validation_loss(std::span<const AdgProblem> cal, std::span<const AdgProblem> pred,
                            const ScorerParams& scorer, double alpha, const SoftConfig& soft,
                            QuantileOrientation orientation) {
  ad::Tape tape;
  const auto vars = make_scorer_constants(tape, scorer);
  const auto calib = differentiable_calibrate(cal, vars, alpha, soft, orientation);
  const auto q = differentiable_predict(pred, vars, calib.tau_hat, soft);
  return retention_loss(tape, pred, q).value();
}

double loss_and_gradient(std::span<const AdgProblem> cal, std::span<const AdgProblem> pred,
                         const ScorerParams& scorer, double alpha, const SoftConfig& soft,
                         QuantileOrientation orientation, std::vector<double>& grad) {
  ad::Tape tape;
  const auto vars = make_scorer_leaves(tape, scorer);
  const auto calib = differentiable_calibrate(cal, vars, alpha, soft, orientation);
  const auto q = differentiable_predict(pred, vars, calib.tau_hat, soft);
  const ad::Var loss = retention_loss(tape, pred, q);
  grad = tape.gradient(loss, scorer_leaf_list(vars));
  return loss.value();
}

TrainResult train_scorer(std::span<const AdgProblem> train, std::span<const AdgProblem> val, std::size_t n_features,
                         const TrainConfig& cfg) {
  ScorerParams init;
  init.weights.assign(n_features, 0.0);
  return train_scorer(train, val, init, cfg);
}

TrainResult train_scorer(std::span<const AdgProblem> train, std::span<const AdgProblem> val, const ScorerParams& init,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() < 2) throw Error(ErrorCode::TooFewProblems, "training needs at least 2 problems");
  if (val.empty()) throw Error(ErrorCode::TooFewProblems, "training needs a non-empty validation set");

  TrainResult result;
  result.scorer = init;
  if (cfg.epochs == 0) return result;

  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = init.weights.size();
  const FeatureScaling fs = feature_scaling(train, n, cfg.standardize);

  // params holds (u..., c) in standardized coordinates.
  std::vector<double> params(n + 1);
  double offset = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    params[j] = init.weights[j] * fs.scale[j];
    offset += init.weights[j] * fs.mean[j];
  }
  params[n] = init.bias + offset;
  AdamState adam(params.size(), cfg.learning_rate);

  auto unpack = [&](const std::vector<double>& p) {
    ScorerParams s = init;
    double b = p[n];
    for (std::size_t j = 0; j < n; ++j) {
      s.weights[j] = p[j] / fs.scale[j];
      b -= s.weights[j] * fs.mean[j];
    }
    s.bias = b;
    return s;
  };
  // Chain rule from raw-parameter gradients to standardized ones.
  auto pull_back = [&](std::vector<double>& g) {
    for (std::size_t j = 0; j < n; ++j) g[j] = (g[j] - g[n] * fs.mean[j]) / fs.scale[j];
  };

  result.best_val_metric = soft_validation_loss(train, val, init, cfg.alpha, cfg.soft, cfg.orientation);
  std::size_t since_best = 0;
  std::vector<double> grad;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto split = epoch_split(train.size(), cfg.cal_fraction, rng);
    const auto cal = pick(train, split.cal);
    const auto pred = pick(train, split.pred);
    double loss = 0.0;
    try {
      loss = loss_and_gradient(cal, pred, unpack(params), cfg.alpha, cfg.soft, cfg.orientation, grad);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteValue || e.code() == ErrorCode::NonFiniteGradient) {
        throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + ": " + e.what());
      }
      throw;
    }
    if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch));
    pull_back(grad);
    adam_step(adam, params, grad);

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss;
    const ScorerParams current = unpack(params);
    entry.val_metric = soft_validation_loss(train, val, current, cfg.alpha, cfg.soft, cfg.orientation);
    if (entry.val_metric < result.best_val_metric) {
      entry.improved = true;
      result.best_val_metric = entry.val_metric;
      result.best_epoch = epoch;
      result.scorer = current;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.log.push_back(entry);
    if (since_best >= cfg.patience) break;
  }
  return result;
}

}  // namespace cohconf
