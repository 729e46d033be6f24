#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "cohconf/adg.hpp"
#include "cohconf/autodiff.hpp"
#include "cohconf/hard_cf.hpp"

namespace cohconf {

struct SoftConfig {
  double T_p = 0.1;       // soft-keep temperature
  double gamma = 6.0;     // ancestor weight in the geometric mean
  double tau_s = 2.0;     // violation sharpness
  double lambda = 1.6;    // weight of the violation term in the utility
  double beta = 1.0;      // softmax inverse temperature
  double tau_z = 0.1;     // gate temperature
  double rho = 100.0;     // soft-quantile sharpness
  double epsilon = 1e-12; // log guard and probability floor
  double margin_m = 20.0; // grid margin

  /// Throws InvalidConfig unless every field is finite and positive.
  void validate() const;

  /// "paper-validation" (alias "practical"), "sharp" or "train-default". Throws InvalidConfig.
  static SoftConfig preset(std::string_view name);
  static SoftConfig paper_validation();
  static SoftConfig sharp();
  static SoftConfig train_default();
  /// Eight training configurations (gamma, lambda, tau_s, T_p, tau_z varied;
  /// beta 1, rho 100, m 20) used as the DCF hyperparameter search space.
  static std::vector<SoftConfig> search_grid();

  bool operator==(const SoftConfig&) const = default;
};

using VarMatrix = std::vector<std::vector<ad::Var>>;  // claims x grid

/// Scorer parameters living on a tape. The offset C stays a constant: the
/// whole pipeline is invariant to a common shift of the risks.
struct ScorerVars {
  std::vector<ad::Var> weights;
  ad::Var bias;
  double risk_offset_C = 0.0;
};

/// Puts weights and bias on the tape as leaves.
ScorerVars make_scorer_leaves(ad::Tape& tape, const ScorerParams& scorer);
/// Same values as constants (no gradient).
ScorerVars make_scorer_constants(ad::Tape& tape, const ScorerParams& scorer);
/// Leaves in the order weights..., bias.
std::vector<ad::Var> scorer_leaf_list(const ScorerVars& vars);

std::vector<ad::Var> soft_risk_scores(const ScorerVars& scorer, const AdgProblem& problem);

/// Sorted, deduplicated risks with min - m prepended and max + m appended.
/// The grid entries are the risk variables themselves, so gradients flow
/// through threshold positions.
std::vector<ad::Var> soft_tau_grid(std::span<const ad::Var> risks, double margin_m);

/// p[v][t] = sigmoid((tau_t - r_v) / T_p).
VarMatrix soft_keep(std::span<const ad::Var> risks, std::span<const ad::Var> grid, double T_p);

/// log q[v][t] = (gamma * sum_{u in Anc(v)} log(p[u][t] + eps) + log(p[v][t] + eps))
///               / (gamma * |Anc(v)| + 1), then q clamped to [eps, 1 - eps].
VarMatrix ancestor_coherence(const AdgProblem& problem, const VarMatrix& p, double gamma, double epsilon);

/// V_t = 1 - exp(mean_{false v} log(1 - q[v][t] + eps) / tau_s); all zero
/// when the problem has no false claim.
std::vector<ad::Var> violation_scores(const AdgProblem& problem, const VarMatrix& q, double tau_s, double epsilon);

struct SoftSupremum {
  ad::Var tau_tilde;
  std::vector<ad::Var> tau_norm;
  std::vector<ad::Var> v_norm;
  std::vector<ad::Var> weights;
};

/// s_t = tau_norm_t - lambda * V_norm_t, w = softmax(beta * s),
/// tau_tilde = sum_t w_t * tau_t over the raw grid.
SoftSupremum soft_supremum(std::span<const ad::Var> grid, std::span<const ad::Var> V, double lambda, double beta);

/// Soft k-th smallest (k is 1-based): rank_i = 1 + sum_{j != i} sigmoid(rho (x_i - x_j)),
/// output sum_i softmax_i(-rho (rank_i - k)^2) x_i. Throws EmptyValues,
/// InvalidArgument for k outside [1, n].
ad::Var soft_quantile(std::span<const ad::Var> values, std::size_t k, double rho);

/// A soft threshold: either a sentinel or a finite value on the tape.
struct SoftThreshold {
  Threshold::Kind kind = Threshold::Kind::NegInf;
  ad::Var value;  // valid only for Kind::Finite
};

/// Soft quantile at the order statistic split_quantile would choose.
SoftThreshold soft_quantile(std::span<const ad::Var> values, double alpha, double rho,
                            QuantileOrientation orientation = QuantileOrientation::Lower);

/// w_t proportional to exp(beta * tau_norm_t) * sigmoid((tau_hat - tau_t) / tau_z),
/// computed in log space. A +inf threshold leaves the gate open. Throws
/// DegenerateWeights when every unnormalized weight underflows, including
/// the -inf threshold.
std::vector<ad::Var> gated_soft_argmax(std::span<const ad::Var> grid, const SoftThreshold& tau_hat, double beta,
                                       double tau_z);

/// q_v = sum_t w_t q[v][t].
std::vector<ad::Var> soft_retention(const VarMatrix& q, std::span<const ad::Var> w);

/// L = -(1/|problems|) sum_i sum_v y_iv q_iv.
ad::Var retention_loss(ad::Tape& tape, std::span<const AdgProblem> problems, const std::vector<std::vector<ad::Var>>& q);

struct SoftCalibration {
  SoftThreshold tau_hat;
  std::vector<ad::Var> tau_tilde;  // one per calibration problem
};

/// Per-problem soft nonconformity followed by the cross-problem soft quantile.
/// Throws TooFewProblems on an empty set.
SoftCalibration differentiable_calibrate(std::span<const AdgProblem> cal, const ScorerVars& scorer, double alpha,
                                         const SoftConfig& cfg,
                                         QuantileOrientation orientation = QuantileOrientation::Lower);

/// Soft nonconformity of one problem.
ad::Var soft_nonconformity(const AdgProblem& problem, std::span<const ad::Var> risks, const SoftConfig& cfg);

/// Retention probabilities of one problem. A threshold whose gate closes
/// completely yields the reject-all outcome: every q_v is the constant eps.
std::vector<ad::Var> soft_predict_problem(const AdgProblem& problem, std::span<const ad::Var> risks,
                                          const SoftThreshold& tau_hat, const SoftConfig& cfg);

std::vector<std::vector<ad::Var>> differentiable_predict(std::span<const AdgProblem> pred, const ScorerVars& scorer,
                                                         const SoftThreshold& tau_hat, const SoftConfig& cfg);

// Value-only conveniences for diagnostics and inference.

double soft_nonconformity_value(const AdgProblem& problem, std::span<const double> risks, const SoftConfig& cfg);

struct SoftCalibrationValues {
  Threshold tau_hat = Threshold::neg_inf();
  std::vector<double> tau_tilde;
};

SoftCalibrationValues soft_calibrate_values(std::span<const AdgProblem> cal,
                                            std::span<const std::vector<double>> risks, double alpha,
                                            const SoftConfig& cfg,
                                            QuantileOrientation orientation = QuantileOrientation::Lower);

std::vector<double> soft_predict_values(const AdgProblem& problem, std::span<const double> risks,
                                        const Threshold& tau_hat, const SoftConfig& cfg);

/// Claims whose soft retention probability is at least 0.5.
ClaimSet round_retention(std::span<const double> q);

}  // namespace cohconf
