#include "cohconf/hard_cf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cohconf/error.hpp"

namespace cohconf {

double ScorerParams::score(std::span<const double> features) const {
  if (features.size() != weights.size()) {
    throw Error(ErrorCode::SchemaMismatch, "scorer has " + std::to_string(weights.size()) +
                                               " weights but claim has " + std::to_string(features.size()) +
                                               " features");
  }
  double s = bias;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * features[i];
  return s;
}

std::vector<double> risk_scores(const ScorerParams& scorer, const AdgProblem& problem) {
  std::vector<double> risks;
  risks.reserve(problem.size());
  for (const auto& c : problem.claims()) risks.push_back(scorer.risk_offset_C - scorer.score(c.features));
  return risks;
}

TauGrid build_tau_grid(std::span<const double> risks, double margin_m) {
  if (risks.empty()) throw Error(ErrorCode::EmptyRisks, "cannot build a threshold grid without risks");
  if (!(margin_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "grid margin must be positive");
  TauGrid grid;
  grid.margin_m = margin_m;
  grid.values.assign(risks.begin(), risks.end());
  std::sort(grid.values.begin(), grid.values.end());
  grid.values.erase(std::unique(grid.values.begin(), grid.values.end()), grid.values.end());
  const double lo = grid.values.front() - margin_m;
  const double hi = grid.values.back() + margin_m;
  grid.values.insert(grid.values.begin(), lo);
  grid.values.push_back(hi);
  return grid;
}

ClaimSet generate_subgraph(const AdgProblem& problem, std::span<const double> risks, double tau,
                           Filtering filtering) {
  const std::size_t n = problem.size();
  if (risks.size() != n) {
    throw Error(ErrorCode::SchemaMismatch, "risk vector length does not match problem '" + problem.id() + "'");
  }
  std::vector<bool> keep(n, false);
  for (ClaimId v = 0; v < n; ++v) keep[v] = risks[v] <= tau;
  if (filtering == Filtering::Coherent) {
    // In topological order, a node survives iff it passes and all parents
    // survived; that is exactly the ancestor-closed fixpoint.
    for (ClaimId v : problem.topological_order()) {
      if (!keep[v]) continue;
      for (ClaimId p : problem.parents(v)) {
        if (!keep[p]) {
          keep[v] = false;
          break;
        }
      }
    }
  }
  ClaimSet out;
  for (ClaimId v = 0; v < n; ++v)
    if (keep[v]) out.push_back(v);
  return out;
}

bool is_valid_retention(const AdgProblem& problem, std::span<const ClaimId> retained, Filtering filtering) {
  return filtering == Filtering::Coherent ? is_coherently_factual(problem, retained)
                                          : is_factual(problem, retained);
}

double hard_nonconformity(const AdgProblem& problem, std::span<const double> risks, const TauGrid& grid,
                          Filtering filtering) {
  double nu = grid.values.front();
  for (double tau : grid.values) {
    const auto retained = generate_subgraph(problem, risks, tau, filtering);
    if (!is_valid_retention(problem, retained, filtering)) break;
    nu = tau;
  }
  return nu;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1), got " + std::to_string(alpha));
  }
}

// ceil((1 - alpha)(n + 1)), guarded against representation error such as
// 0.9 * 10 = 9.000000000000002.
long conformal_rank(double alpha, std::size_t n) {
  const double x = (1.0 - alpha) * static_cast<double>(n + 1);
  return static_cast<long>(std::ceil(x - 1e-9));
}

}  // namespace

OrderStatistic conformal_order_statistic(std::size_t n, double alpha, QuantileOrientation orientation) {
  check_alpha(alpha);
  const long rank = conformal_rank(alpha, n);
  OrderStatistic out;
  if (orientation == QuantileOrientation::Lower) {
    const long k = static_cast<long>(n) + 1 - rank;
    if (k < 1) {
      out.kind = Threshold::Kind::NegInf;
    } else {
      out.k = static_cast<std::size_t>(k);
    }
  } else if (rank > static_cast<long>(n)) {
    out.kind = Threshold::Kind::PosInf;
  } else {
    out.k = static_cast<std::size_t>(std::max(rank, 1L));
  }
  return out;
}

CalibratedThreshold split_quantile(std::span<const double> scores, double alpha, QuantileOrientation orientation) {
  if (scores.empty()) throw Error(ErrorCode::EmptyScores, "split_quantile needs at least one score");
  const auto stat = conformal_order_statistic(scores.size(), alpha, orientation);
  CalibratedThreshold out;
  out.alpha = alpha;
  out.n_cal = scores.size();
  switch (stat.kind) {
    case Threshold::Kind::NegInf: out.tau_hat = Threshold::neg_inf(); break;
    case Threshold::Kind::PosInf: out.tau_hat = Threshold::pos_inf(); break;
    case Threshold::Kind::Finite: {
      std::vector<double> sorted(scores.begin(), scores.end());
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(stat.k - 1), sorted.end());
      out.tau_hat = Threshold::finite(sorted[stat.k - 1]);
      break;
    }
  }
  return out;
}

HardPrediction hard_predict(const AdgProblem& problem, std::span<const double> risks, const TauGrid& grid,
                            const Threshold& tau_hat, Filtering filtering) {
  HardPrediction out;
  for (auto it = grid.values.rbegin(); it != grid.values.rend(); ++it) {
    if (tau_hat.above(*it)) {
      out.tau_star = Threshold::finite(*it);
      out.retained = generate_subgraph(problem, risks, *it, filtering);
      return out;
    }
  }
  return out;
}

std::vector<double> frequency_scores(const AdgProblem& problem, double beta_mix) {
  if (!(beta_mix >= 0.0 && beta_mix <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "beta_mix must lie in [0,1]");
  }
  const std::size_t n = problem.size();
  std::vector<double> f(n);
  for (ClaimId v = 0; v < n; ++v) {
    const auto& freq = problem.claims()[v].freq;
    if (!freq) {
      throw Error(ErrorCode::MissingFrequency,
                  "claim " + std::to_string(v) + " of problem '" + problem.id() + "' has no frequency");
    }
    f[v] = *freq;
  }
  std::vector<double> s(n);
  std::vector<double> buf;
  for (ClaimId v = 0; v < n; ++v) {
    const auto& desc = problem.descendants(v);
    double med = f[v];
    if (!desc.empty()) {
      buf.clear();
      for (ClaimId u : desc) buf.push_back(f[u]);
      std::sort(buf.begin(), buf.end());
      const std::size_t m = buf.size();
      med = m % 2 == 1 ? buf[m / 2] : 0.5 * (buf[m / 2 - 1] + buf[m / 2]);
    }
    s[v] = (1.0 - beta_mix) * f[v] + beta_mix * med;
  }
  return s;
}

std::vector<double> frequency_baseline_risk(const AdgProblem& problem, double beta_mix,
                                            std::optional<double> c_freq) {
  auto s = frequency_scores(problem, beta_mix);
  double c = 0.0;
  if (c_freq) {
    c = *c_freq;
  } else {
    for (const auto& claim : problem.claims()) c = std::max(c, *claim.freq);
  }
  for (double& x : s) x = c - x;
  return s;
}

CalibratedThreshold hard_calibrate(std::span<const AdgProblem> problems,
                                   std::span<const std::vector<double>> risks, double alpha, double margin_m,
                                   Filtering filtering, QuantileOrientation orientation) {
  if (problems.size() != risks.size()) {
    throw Error(ErrorCode::InvalidArgument, "one risk vector per calibration problem is required");
  }
  std::vector<double> scores;
  scores.reserve(problems.size());
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const auto grid = build_tau_grid(risks[i], margin_m);
    scores.push_back(hard_nonconformity(problems[i], risks[i], grid, filtering));
  }
  return split_quantile(scores, alpha, orientation);
}

}  // namespace cohconf
