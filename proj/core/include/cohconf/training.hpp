#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cohconf/adg.hpp"
#include "cohconf/dcf.hpp"
#include "cohconf/hard_cf.hpp"

namespace cohconf {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double lr = 0.015;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n, double learning_rate = 0.015) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

/// Bias-corrected Adam update in place. Throws InvalidArgument on a shape
/// mismatch, NonFiniteGradient if any gradient is NaN or infinite.
void adam_step(AdamState& state, std::vector<double>& params, std::span<const double> grads);

struct TrainConfig {
  double alpha = 0.05;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  double cal_fraction = 0.5;
  std::uint64_t seed = 0;
  double learning_rate = 0.015;
  QuantileOrientation orientation = QuantileOrientation::Lower;
  /// Optimize in z-scored feature coordinates (statistics of the training
  /// claims). The returned scorer is the equivalent one over raw features.
  bool standardize = true;
  SoftConfig soft;

  /// Throws InvalidConfig.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

struct EpochSplit {
  std::vector<std::size_t> cal;
  std::vector<std::size_t> pred;
};

/// Random disjoint split of indices [0, n): the calibration side gets
/// floor(n * cal_fraction) items, at least 1, and the prediction side at least 1.
/// Throws TooFewProblems when n < 2.
EpochSplit epoch_split(std::size_t n, double cal_fraction, std::mt19937_64& rng);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  bool improved = false;
};

struct TrainResult {
  ScorerParams scorer;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0 means the initialization was never beaten
  double best_val_metric = 0.0;
};

/// Retention loss with `pred` as prediction set and `cal` as calibration set,
/// evaluated without gradients.
double soft_validation_loss(std::span<const AdgProblem> cal, std::span<const AdgProblem> pred,
                            const ScorerParams& scorer, double alpha, const SoftConfig& soft,
                            QuantileOrientation orientation = QuantileOrientation::Lower);

/// One differentiable step: calibrate on `cal`, predict on `pred`, return
/// the loss and its gradient with respect to (weights..., bias).
double loss_and_gradient(std::span<const AdgProblem> cal, std::span<const AdgProblem> pred,
                         const ScorerParams& scorer, double alpha, const SoftConfig& soft,
                         QuantileOrientation orientation, std::vector<double>& grad);

/// Trains a linear scorer from `init` (zero weights when omitted). Returns
/// the parameters with the lowest validation loss seen. Throws TooFewProblems,
/// NonFiniteLoss (naming the epoch), InvalidConfig.
TrainResult train_scorer(std::span<const AdgProblem> train, std::span<const AdgProblem> val, std::size_t n_features,
                         const TrainConfig& cfg);
TrainResult train_scorer(std::span<const AdgProblem> train, std::span<const AdgProblem> val, const ScorerParams& init,
                         const TrainConfig& cfg);

}  // namespace cohconf
