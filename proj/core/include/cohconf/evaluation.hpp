#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cohconf/adg.hpp"
#include "cohconf/dcf.hpp"
#include "cohconf/hard_cf.hpp"
#include "cohconf/training.hpp"

namespace cohconf {

// Small statistics helpers. Pearson throws InsufficientVariance when either
// vector is constant; all throw InvalidArgument on length mismatch or empty input.
double pearson(std::span<const double> x, std::span<const double> y);
double mean_absolute_error(std::span<const double> x, std::span<const double> y);
/// Mann-Whitney AUC of `scores` for separating label 1 from label 0, ties
/// counting one half. Throws EmptyClass.
double auc(std::span<const double> scores, std::span<const int> labels);

struct FoldMetrics {
  double coverage = 1.0;
  double retention_mean = 0.0;      // claims per problem
  double retention_fraction = 0.0;  // retained claims / all claims
  std::size_t n_problems = 0;
};

/// Hard prediction on every test problem. A problem counts as covered when
/// its retained set is valid for the filtering mode: coherently factual for
/// coherent filtering, all-true for independent filtering.
FoldMetrics evaluate_fold(std::span<const AdgProblem> test, std::span<const std::vector<double>> risks,
                          const Threshold& tau_hat, double margin_m, Filtering filtering = Filtering::Coherent);

enum class Method { Dcf, Cf, Independent, BoostedIndependent };

std::string_view method_name(Method m);
/// Accepts "dcf", "cf", "independent", "boosted-independent". Throws InvalidArgument.
Method parse_method(std::string_view name);

struct MethodRow {
  Method method = Method::Cf;
  double alpha = 0.1;
  std::optional<std::size_t> fold;  // empty for the aggregate over folds
  double coverage = 0.0;
  double retention_mean = 0.0;
  double retention_fraction = 0.0;
  bool meets_target = false;
  bool near_miss = false;  // misses 1 - alpha by at most half a percentage point
};

struct AgreementRow {
  double alpha = 0.1;
  std::size_t both_incl = 0;
  std::size_t soft_only = 0;
  std::size_t hard_only = 0;
  std::size_t both_excl = 0;

  std::size_t total() const { return both_incl + soft_only + hard_only + both_excl; }
  double agree_pct() const;
};

struct Correlation {
  double pearson_r = 0.0;
  double mae = 0.0;
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<MethodRow> rows;
  std::vector<AgreementRow> agreement;
  std::optional<Correlation> score_correlation;
  std::optional<Correlation> threshold_correlation;
  /// (alpha, soft config) chosen by the DCF hyperparameter search, if any.
  std::vector<std::pair<double, SoftConfig>> dcf_selected;
};

/// Sets meets_target / near_miss from coverage and alpha.
void mark_target(MethodRow& row);

struct EvalOptions {
  std::vector<double> alphas{0.05, 0.10};
  std::vector<Method> methods{Method::Dcf, Method::Cf, Method::Independent};
  std::size_t folds = 20;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  double train_share = 0.70;
  double val_share = 0.15;
  double margin_m = 20.0;
  /// beta_mix candidates searched for the frequency CF baseline.
  std::vector<double> beta_mix_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  /// DCF training; alpha is overridden per evaluated alpha.
  TrainConfig train;
  /// Candidate soft configs for DCF. When non-empty, one candidate per alpha
  /// is picked before the folds run: each is trained on `search_repeats`
  /// tuning resplits and the one with the highest mean hard retention on the
  /// held-out part wins. It then replaces train.soft in every fold.
  std::vector<SoftConfig> dcf_search;
  std::size_t search_repeats = 3;
};

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded random train/val/test resplit for one Monte-Carlo fold.
FoldSplit monte_carlo_split(std::size_t n, double train_share, double val_share, std::uint64_t seed,
                            std::size_t fold);

/// Shared risk offset for frequency risks: the largest frequency in the data.
double max_frequency(std::span<const AdgProblem> problems);

/// Logistic regression on claim labels (the learned scorer of the boosted
/// independent baseline). Higher score means more likely true.
ScorerParams fit_logistic_scorer(std::span<const AdgProblem> train, std::size_t n_features, std::size_t steps = 400,
                                 double learning_rate = 0.05);

/// Monte-Carlo cross-validation: per fold and alpha each method is fitted on
/// the train split (validation split for model selection), calibrated on the
/// train split and evaluated on the test split. Rows hold every fold and one
/// aggregate per (alpha, method). Throws TooFewProblems.
EvalReport cross_validate(std::span<const AdgProblem> dataset, std::size_t n_features, const EvalOptions& options);

/// Calibrates hard and soft thresholds on the whole set, predicts every
/// problem both ways and tallies claim-level agreement per alpha. Soft
/// retention probabilities are rounded with q >= 0.5 meaning retained.
std::vector<AgreementRow> soft_hard_agreement(std::span<const AdgProblem> dataset,
                                              std::span<const std::vector<double>> risks, const SoftConfig& cfg,
                                              std::span<const double> alphas,
                                              QuantileOrientation orientation = QuantileOrientation::Lower);

struct CalibrationCorrelation {
  Correlation scores;                     // soft vs hard nonconformity per problem
  std::optional<Correlation> thresholds;  // soft vs hard calibrated threshold across alphas
  std::vector<double> soft_scores;
  std::vector<double> hard_scores;
};

/// Restricted to problems with at least one false claim. Throws TooFewProblems
/// (fewer than 3 such problems), InsufficientVariance.
CalibrationCorrelation calibration_correlation(std::span<const AdgProblem> dataset,
                                               std::span<const std::vector<double>> risks, const SoftConfig& cfg,
                                               std::span<const double> alphas,
                                               QuantileOrientation orientation = QuantileOrientation::Lower);

struct FeatureContribution {
  std::string name;
  double value = 0.0;
  double weight = 0.0;
  double contribution = 0.0;
};

struct ContributionReport {
  std::vector<FeatureContribution> features;  // sorted by |contribution|, descending
  double bias = 0.0;
  double total = 0.0;  // sum of contributions plus bias
};

/// Throws SchemaMismatch.
ContributionReport feature_contributions(const ScorerParams& scorer, const FeatureSchema& schema,
                                         std::span<const double> features);

struct SeparationMetrics {
  double separation = 0.0;
  double cohens_d = 0.0;
  double overlap = 0.0;
};

/// Scores are z-normalized with the mean and standard deviation of `pooled`
/// (for instance the union of several methods' scores). separation is
/// mean(true) - mean(false); Cohen's d divides it by the standard deviation
/// of the normalized scores; overlap is the overlapping coefficient of the
/// two class histograms over 64 bins spanning the normalized range.
/// Throws EmptyClass, InsufficientVariance.
SeparationMetrics separation_metrics(std::span<const double> scores, std::span<const int> labels,
                                     std::span<const double> pooled);

}  // namespace cohconf
