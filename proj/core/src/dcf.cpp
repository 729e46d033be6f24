#include "cohconf/dcf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cohconf/error.hpp"

namespace cohconf {

using ad::Tape;
using ad::Var;

void SoftConfig::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"T_p", T_p},         {"gamma", gamma}, {"tau_s", tau_s},     {"lambda", lambda},     {"beta", beta},
      {"tau_z", tau_z},     {"rho", rho},     {"epsilon", epsilon}, {"margin_m", margin_m},
  };
  for (const auto& [name, value] : fields) {
    if (!std::isfinite(value) || value <= 0.0) {
      throw Error(ErrorCode::InvalidConfig, std::string("soft config field '") + name +
                                                "' must be finite and positive, got " + std::to_string(value));
    }
  }
  if (epsilon >= 0.5) throw Error(ErrorCode::InvalidConfig, "epsilon must be below 0.5");
}

SoftConfig SoftConfig::paper_validation() {
  SoftConfig c;
  c.T_p = 0.01;
  c.gamma = 1.0;
  c.tau_s = 0.001;
  c.lambda = 1.0;
  c.beta = 1.0;
  c.tau_z = 0.001;
  c.rho = 100.0;
  c.epsilon = 1e-12;
  c.margin_m = 20.0;
  return c;
}

SoftConfig SoftConfig::sharp() {
  SoftConfig c;
  c.T_p = 1e-3;
  c.gamma = 1.0;
  c.tau_s = 1e-3;
  c.lambda = 2.0;
  c.beta = 1e3;
  c.tau_z = 1e-3;
  c.rho = 1e4;
  c.epsilon = 1e-12;
  c.margin_m = 20.0;
  return c;
}

SoftConfig SoftConfig::train_default() { return SoftConfig{}; }

std::vector<SoftConfig> SoftConfig::search_grid() {
  // gamma, lambda, tau_s, T_p, tau_z
  static constexpr double rows[][5] = {
      {4.0, 1.35, 1.0, 1.0, 0.50}, {5.0, 1.30, 2.0, 0.1, 0.10}, {6.0, 1.60, 2.0, 0.1, 0.10},
      {6.0, 1.60, 0.4, 0.1, 0.10}, {1.5, 1.70, 0.4, 0.1, 0.10}, {6.0, 1.75, 1.0, 0.1, 0.10},
      {2.0, 1.70, 0.4, 0.1, 0.01}, {5.0, 1.90, 2.0, 0.1, 0.50},
  };
  std::vector<SoftConfig> out;
  for (const auto& r : rows) {
    SoftConfig c;
    c.gamma = r[0];
    c.lambda = r[1];
    c.tau_s = r[2];
    c.T_p = r[3];
    c.tau_z = r[4];
    out.push_back(c);
  }
  return out;
}

SoftConfig SoftConfig::preset(std::string_view name) {
  if (name == "paper-validation" || name == "paper" || name == "practical") return paper_validation();
  if (name == "sharp") return sharp();
  if (name == "train-default") return train_default();
  throw Error(ErrorCode::InvalidConfig, "unknown soft config preset '" + std::string(name) + "'");
}

namespace {

ScorerVars make_scorer(Tape& tape, const ScorerParams& scorer, bool leaves) {
  ScorerVars out;
  out.weights.reserve(scorer.weights.size());
  for (double w : scorer.weights) out.weights.push_back(leaves ? tape.leaf(w) : tape.constant(w));
  out.bias = leaves ? tape.leaf(scorer.bias) : tape.constant(scorer.bias);
  out.risk_offset_C = scorer.risk_offset_C;
  return out;
}

}  // namespace

ScorerVars make_scorer_leaves(Tape& tape, const ScorerParams& scorer) { return make_scorer(tape, scorer, true); }

ScorerVars make_scorer_constants(Tape& tape, const ScorerParams& scorer) {
  return make_scorer(tape, scorer, false);
}

std::vector<Var> scorer_leaf_list(const ScorerVars& vars) {
  std::vector<Var> out(vars.weights);
  out.push_back(vars.bias);
  return out;
}

std::vector<Var> soft_risk_scores(const ScorerVars& scorer, const AdgProblem& problem) {
  std::vector<Var> risks;
  risks.reserve(problem.size());
  for (const auto& claim : problem.claims()) {
    if (claim.features.size() != scorer.weights.size()) {
      throw Error(ErrorCode::SchemaMismatch, "problem '" + problem.id() + "' has claims with " +
                                                 std::to_string(claim.features.size()) + " features, scorer has " +
                                                 std::to_string(scorer.weights.size()));
    }
    Var s = scorer.bias;
    for (std::size_t i = 0; i < claim.features.size(); ++i) {
      if (claim.features[i] != 0.0) s = s + scorer.weights[i] * claim.features[i];
    }
    risks.push_back(scorer.risk_offset_C - s);
  }
  return risks;
}

std::vector<Var> soft_tau_grid(std::span<const Var> risks, double margin_m) {
  if (risks.empty()) throw Error(ErrorCode::EmptyRisks, "cannot build a threshold grid without risks");
  if (!(margin_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "grid margin must be positive");
  std::vector<Var> sorted(risks.begin(), risks.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](Var a, Var b) { return a.value() < b.value(); });
  std::vector<Var> grid;
  grid.reserve(sorted.size() + 2);
  grid.push_back(sorted.front() - margin_m);
  for (Var r : sorted)
    if (grid.size() == 1 || r.value() != grid.back().value()) grid.push_back(r);
  grid.push_back(sorted.back() + margin_m);
  return grid;
}

VarMatrix soft_keep(std::span<const Var> risks, std::span<const Var> grid, double T_p) {
  VarMatrix p(risks.size());
  const double inv = 1.0 / T_p;
  for (std::size_t v = 0; v < risks.size(); ++v) {
    p[v].reserve(grid.size());
    for (Var tau : grid) p[v].push_back(ad::sigmoid((tau - risks[v]) * inv));
  }
  return p;
}

VarMatrix ancestor_coherence(const AdgProblem& problem, const VarMatrix& p, double gamma, double epsilon) {
  const std::size_t n = problem.size();
  if (p.size() != n) throw Error(ErrorCode::InvalidArgument, "keep matrix does not match problem size");
  if (n == 0) return {};
  const std::size_t g = p[0].size();
  VarMatrix logp(n);
  for (std::size_t v = 0; v < n; ++v) {
    logp[v].reserve(g);
    for (Var x : p[v]) logp[v].push_back(ad::log(x + epsilon));
  }
  VarMatrix q(n);
  for (ClaimId v = 0; v < n; ++v) {
    const auto& anc = problem.ancestors(v);
    const double denom = gamma * static_cast<double>(anc.size()) + 1.0;
    q[v].reserve(g);
    for (std::size_t t = 0; t < g; ++t) {
      Var acc = logp[v][t];
      if (!anc.empty()) {
        Var a = logp[anc[0]][t];
        for (std::size_t i = 1; i < anc.size(); ++i) a = a + logp[anc[i]][t];
        acc = acc + gamma * a;
      }
      Var qv = ad::exp(acc / denom);
      Tape& tape = *qv.tape();
      qv = ad::min(ad::max(qv, tape.constant(epsilon)), tape.constant(1.0 - epsilon));
      q[v].push_back(qv);
    }
  }
  return q;
}

std::vector<Var> violation_scores(const AdgProblem& problem, const VarMatrix& q, double tau_s, double epsilon) {
  if (q.empty()) throw Error(ErrorCode::InvalidArgument, "violation scores need a non-empty problem");
  const std::size_t g = q[0].size();
  Tape& tape = *q[0][0].tape();
  std::vector<ClaimId> false_claims;
  for (ClaimId v = 0; v < problem.size(); ++v)
    if (problem.claims()[v].label == 0) false_claims.push_back(v);
  std::vector<Var> V;
  V.reserve(g);
  if (false_claims.empty()) {
    for (std::size_t t = 0; t < g; ++t) V.push_back(tape.constant(0.0));
    return V;
  }
  const double scale = 1.0 / (static_cast<double>(false_claims.size()) * tau_s);
  for (std::size_t t = 0; t < g; ++t) {
    // (1 - q) first: for tiny epsilon, 1 + epsilon would round to 1.
    Var acc = ad::log((1.0 - q[false_claims[0]][t]) + epsilon);
    for (std::size_t i = 1; i < false_claims.size(); ++i) acc = acc + ad::log((1.0 - q[false_claims[i]][t]) + epsilon);
    V.push_back(1.0 - ad::exp(acc * scale));
  }
  return V;
}

SoftSupremum soft_supremum(std::span<const Var> grid, std::span<const Var> V, double lambda, double beta) {
  if (grid.empty() || grid.size() != V.size()) {
    throw Error(ErrorCode::InvalidArgument, "grid and violation vectors must be non-empty and aligned");
  }
  SoftSupremum out;
  out.tau_norm = ad::min_max_normalize(grid);
  out.v_norm = ad::min_max_normalize(V);
  std::vector<Var> logits;
  logits.reserve(grid.size());
  for (std::size_t t = 0; t < grid.size(); ++t) logits.push_back((out.tau_norm[t] - lambda * out.v_norm[t]) * beta);
  out.weights = ad::softmax(logits);
  Var acc = out.weights[0] * grid[0];
  for (std::size_t t = 1; t < grid.size(); ++t) acc = acc + out.weights[t] * grid[t];
  out.tau_tilde = acc;
  return out;
}

Var soft_quantile(std::span<const Var> values, std::size_t k, double rho) {
  const std::size_t n = values.size();
  if (n == 0) throw Error(ErrorCode::EmptyValues, "soft quantile of an empty set");
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidArgument, "soft quantile rank out of range");
  if (n == 1) return values[0];
  Tape& tape = *values[0].tape();
  std::vector<Var> rank(n, tape.constant(1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Var s = ad::sigmoid((values[i] - values[j]) * rho);
      rank[i] = rank[i] + s;
      rank[j] = rank[j] + (1.0 - s);
    }
  }
  const double kd = static_cast<double>(k);
  std::vector<Var> logits;
  logits.reserve(n);
  for (Var r : rank) {
    const Var d = r - kd;
    logits.push_back(d * d * (-rho));
  }
  const auto w = ad::softmax(logits);
  Var acc = w[0] * values[0];
  for (std::size_t i = 1; i < n; ++i) acc = acc + w[i] * values[i];
  return acc;
}

SoftThreshold soft_quantile(std::span<const Var> values, double alpha, double rho, QuantileOrientation orientation) {
  if (values.empty()) throw Error(ErrorCode::EmptyValues, "soft quantile of an empty set");
  const auto stat = conformal_order_statistic(values.size(), alpha, orientation);
  SoftThreshold out;
  out.kind = stat.kind;
  if (stat.kind == Threshold::Kind::Finite) out.value = soft_quantile(values, stat.k, rho);
  return out;
}

std::vector<Var> gated_soft_argmax(std::span<const Var> grid, const SoftThreshold& tau_hat, double beta,
                                   double tau_z) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty threshold grid");
  if (tau_hat.kind == Threshold::Kind::NegInf) {
    throw Error(ErrorCode::DegenerateWeights, "threshold is the -inf sentinel; every gate is closed");
  }
  // Below this log-weight exp() leaves the normal double range.
  constexpr double kLogUnderflow = -708.0;
  const auto tau_norm = ad::min_max_normalize(grid);
  std::vector<Var> logw;
  logw.reserve(grid.size());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < grid.size(); ++t) {
    Var lw = tau_norm[t] * beta;
    if (tau_hat.kind == Threshold::Kind::Finite) lw = lw + ad::log_sigmoid((tau_hat.value - grid[t]) / tau_z);
    best = std::max(best, lw.value());
    logw.push_back(lw);
  }
  if (best < kLogUnderflow) {
    throw Error(ErrorCode::DegenerateWeights,
                "all gated weights underflow (max log-weight " + std::to_string(best) + ")");
  }
  return ad::softmax(logw);
}

std::vector<Var> soft_retention(const VarMatrix& q, std::span<const Var> w) {
  std::vector<Var> out;
  out.reserve(q.size());
  for (const auto& row : q) {
    if (row.size() != w.size()) throw Error(ErrorCode::InvalidArgument, "weights do not match the grid");
    Var acc = w[0] * row[0];
    for (std::size_t t = 1; t < w.size(); ++t) acc = acc + w[t] * row[t];
    out.push_back(acc);
  }
  return out;
}

Var retention_loss(Tape& tape, std::span<const AdgProblem> problems, const std::vector<std::vector<Var>>& q) {
  if (problems.size() != q.size()) throw Error(ErrorCode::InvalidArgument, "one q vector per problem is required");
  if (problems.empty()) throw Error(ErrorCode::TooFewProblems, "retention loss over an empty prediction set");
  std::vector<Var> kept;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const auto& claims = problems[i].claims();
    if (q[i].size() != claims.size()) throw Error(ErrorCode::InvalidArgument, "q vector does not match problem");
    for (std::size_t v = 0; v < claims.size(); ++v)
      if (claims[v].label == 1) kept.push_back(q[i][v]);
  }
  if (kept.empty()) return tape.constant(0.0);
  return ad::sum(kept) * (-1.0 / static_cast<double>(problems.size()));
}

Var soft_nonconformity(const AdgProblem& problem, std::span<const Var> risks, const SoftConfig& cfg) {
  const auto grid = soft_tau_grid(risks, cfg.margin_m);
  const auto p = soft_keep(risks, grid, cfg.T_p);
  const auto q = ancestor_coherence(problem, p, cfg.gamma, cfg.epsilon);
  const auto V = violation_scores(problem, q, cfg.tau_s, cfg.epsilon);
  return soft_supremum(grid, V, cfg.lambda, cfg.beta).tau_tilde;
}

SoftCalibration differentiable_calibrate(std::span<const AdgProblem> cal, const ScorerVars& scorer, double alpha,
                                         const SoftConfig& cfg, QuantileOrientation orientation) {
  if (cal.empty()) throw Error(ErrorCode::TooFewProblems, "differentiable calibration needs at least one problem");
  SoftCalibration out;
  out.tau_tilde.reserve(cal.size());
  for (const auto& problem : cal) {
    const auto risks = soft_risk_scores(scorer, problem);
    out.tau_tilde.push_back(soft_nonconformity(problem, risks, cfg));
  }
  out.tau_hat = soft_quantile(out.tau_tilde, alpha, cfg.rho, orientation);
  return out;
}

std::vector<Var> soft_predict_problem(const AdgProblem& problem, std::span<const Var> risks,
                                      const SoftThreshold& tau_hat, const SoftConfig& cfg) {
  Tape& tape = *risks[0].tape();
  const auto grid = soft_tau_grid(risks, cfg.margin_m);
  std::vector<Var> w;
  try {
    w = gated_soft_argmax(grid, tau_hat, cfg.beta, cfg.tau_z);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateWeights) throw;
    std::vector<Var> reject(problem.size(), tape.constant(cfg.epsilon));
    return reject;
  }
  const auto p = soft_keep(risks, grid, cfg.T_p);
  const auto q = ancestor_coherence(problem, p, cfg.gamma, cfg.epsilon);
  return soft_retention(q, w);
}

std::vector<std::vector<Var>> differentiable_predict(std::span<const AdgProblem> pred, const ScorerVars& scorer,
                                                     const SoftThreshold& tau_hat, const SoftConfig& cfg) {
  std::vector<std::vector<Var>> out;
  out.reserve(pred.size());
  for (const auto& problem : pred) {
    const auto risks = soft_risk_scores(scorer, problem);
    out.push_back(soft_predict_problem(problem, risks, tau_hat, cfg));
  }
  return out;
}

namespace {

std::vector<Var> constants(Tape& tape, std::span<const double> xs) {
  std::vector<Var> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(tape.constant(x));
  return out;
}

}  // namespace

double soft_nonconformity_value(const AdgProblem& problem, std::span<const double> risks, const SoftConfig& cfg) {
  Tape tape;
  const auto r = constants(tape, risks);
  return soft_nonconformity(problem, r, cfg).value();
}

SoftCalibrationValues soft_calibrate_values(std::span<const AdgProblem> cal,
                                            std::span<const std::vector<double>> risks, double alpha,
                                            const SoftConfig& cfg, QuantileOrientation orientation) {
  if (cal.empty()) throw Error(ErrorCode::TooFewProblems, "soft calibration needs at least one problem");
  if (cal.size() != risks.size()) throw Error(ErrorCode::InvalidArgument, "one risk vector per problem is required");
  Tape tape;
  std::vector<Var> tilde;
  SoftCalibrationValues out;
  for (std::size_t i = 0; i < cal.size(); ++i) {
    const auto r = constants(tape, risks[i]);
    tilde.push_back(soft_nonconformity(cal[i], r, cfg));
    out.tau_tilde.push_back(tilde.back().value());
  }
  const auto th = soft_quantile(tilde, alpha, cfg.rho, orientation);
  switch (th.kind) {
    case Threshold::Kind::NegInf: out.tau_hat = Threshold::neg_inf(); break;
    case Threshold::Kind::PosInf: out.tau_hat = Threshold::pos_inf(); break;
    case Threshold::Kind::Finite: out.tau_hat = Threshold::finite(th.value.value()); break;
  }
  return out;
}

std::vector<double> soft_predict_values(const AdgProblem& problem, std::span<const double> risks,
                                        const Threshold& tau_hat, const SoftConfig& cfg) {
  Tape tape;
  const auto r = constants(tape, risks);
  SoftThreshold th;
  th.kind = tau_hat.kind();
  if (tau_hat.is_finite()) th.value = tape.constant(tau_hat.value());
  const auto q = soft_predict_problem(problem, r, th, cfg);
  std::vector<double> out;
  out.reserve(q.size());
  for (Var x : q) out.push_back(x.value());
  return out;
}

ClaimSet round_retention(std::span<const double> q) {
  ClaimSet out;
  for (ClaimId v = 0; v < q.size(); ++v)
    if (q[v] >= 0.5) out.push_back(v);
  return out;
}

}  // namespace cohconf
