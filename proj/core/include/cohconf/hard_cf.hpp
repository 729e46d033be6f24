#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cohconf/adg.hpp"

namespace cohconf {

/// Linear claim scorer pi(x) = w.x + b, turned into risks r = C - pi(x).
struct ScorerParams {
  std::vector<double> weights;
  double bias = 0.0;
  double risk_offset_C = 0.0;

  double score(std::span<const double> features) const;

  bool operator==(const ScorerParams&) const = default;
};

/// A calibrated threshold or one of the two sentinels. Sentinels are never
/// represented by floating-point infinities.
class Threshold {
 public:
  enum class Kind { NegInf, Finite, PosInf };

  static Threshold neg_inf() { return Threshold(Kind::NegInf, 0.0); }
  static Threshold pos_inf() { return Threshold(Kind::PosInf, 0.0); }
  static Threshold finite(double v) { return Threshold(Kind::Finite, v); }

  Kind kind() const noexcept { return kind_; }
  bool is_finite() const noexcept { return kind_ == Kind::Finite; }
  /// Only meaningful for finite thresholds.
  double value() const noexcept { return value_; }

  /// True iff tau lies strictly below this threshold.
  bool above(double tau) const noexcept {
    switch (kind_) {
      case Kind::NegInf: return false;
      case Kind::PosInf: return true;
      case Kind::Finite: return tau < value_;
    }
    return false;
  }

  bool operator==(const Threshold&) const = default;

 private:
  Threshold(Kind kind, double value) : kind_(kind), value_(value) {}

  Kind kind_ = Kind::NegInf;
  double value_ = 0.0;
};

struct TauGrid {
  std::vector<double> values;  // strictly increasing
  double margin_m = 0.0;

  double min() const { return values.front(); }
  double max() const { return values.back(); }
};

struct CalibratedThreshold {
  Threshold tau_hat = Threshold::neg_inf();
  double alpha = 0.1;
  std::size_t n_cal = 0;
};

/// Which order statistic of the nonconformity scores calibrates tau_hat.
/// Lower: the ceil((1-a)(n+1))-th largest (coverage-valid when a larger
/// score is safer). Upper: the ceil((1-a)(n+1))-th smallest.
enum class QuantileOrientation { Lower, Upper };

/// Coherent: a claim is kept only if it and all its ancestors pass the
/// threshold. Independent: pure thresholding.
enum class Filtering { Coherent, Independent };

/// r_v = C - (w.x_v + b). Throws SchemaMismatch on length mismatch.
std::vector<double> risk_scores(const ScorerParams& scorer, const AdgProblem& problem);

/// Sorted unique risks plus min - m and max + m. Throws EmptyRisks,
/// InvalidArgument (m <= 0).
TauGrid build_tau_grid(std::span<const double> risks, double margin_m);

/// U_tau: the claims with r_v <= tau, then (coherent mode) pruned to the
/// largest ancestor-closed subset.
ClaimSet generate_subgraph(const AdgProblem& problem, std::span<const double> risks, double tau,
                           Filtering filtering = Filtering::Coherent);

/// Whether a retained set is valid under the given filtering mode: coherent
/// factuality for coherent filtering, plain factuality otherwise.
bool is_valid_retention(const AdgProblem& problem, std::span<const ClaimId> retained, Filtering filtering);

/// Largest grid value tau such that U_tau' is valid for every grid tau' <= tau.
double hard_nonconformity(const AdgProblem& problem, std::span<const double> risks, const TauGrid& grid,
                          Filtering filtering = Filtering::Coherent);

/// The order statistic split_quantile selects for n scores: a 1-based rank k
/// into the ascending scores, or a sentinel kind when the rank falls off
/// either end.
struct OrderStatistic {
  Threshold::Kind kind = Threshold::Kind::Finite;
  std::size_t k = 0;
};
OrderStatistic conformal_order_statistic(std::size_t n, double alpha, QuantileOrientation orientation);

/// Split-conformal order statistic. Throws EmptyScores, InvalidArgument for
/// alpha outside (0,1).
CalibratedThreshold split_quantile(std::span<const double> scores, double alpha,
                                   QuantileOrientation orientation = QuantileOrientation::Lower);

struct HardPrediction {
  Threshold tau_star = Threshold::neg_inf();
  ClaimSet retained;
};

/// tau* = max{tau in grid : tau < tau_hat}; retained = U_{tau*}. If no grid
/// value lies below tau_hat the prediction rejects everything.
HardPrediction hard_predict(const AdgProblem& problem, std::span<const double> risks, const TauGrid& grid,
                            const Threshold& tau_hat, Filtering filtering = Filtering::Coherent);

/// s(v) = (1 - beta_mix) f(v) + beta_mix * median{f(u) : u in desc(v)}, with
/// sinks falling back to f(v). Risks are c_freq - s(v); c_freq defaults to
/// the problem's maximum frequency, but risks compared across problems need
/// a shared constant. Throws MissingFrequency, InvalidArgument.
std::vector<double> frequency_scores(const AdgProblem& problem, double beta_mix);
std::vector<double> frequency_baseline_risk(const AdgProblem& problem, double beta_mix,
                                            std::optional<double> c_freq = std::nullopt);

/// Nonconformity of every problem followed by split_quantile.
CalibratedThreshold hard_calibrate(std::span<const AdgProblem> problems,
                                   std::span<const std::vector<double>> risks, double alpha, double margin_m,
                                   Filtering filtering = Filtering::Coherent,
                                   QuantileOrientation orientation = QuantileOrientation::Lower);

}  // namespace cohconf
