#include "cohconf/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "cohconf/error.hpp"

namespace cohconf {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "vectors must have equal length");
  if (x.empty()) throw Error(ErrorCode::InvalidArgument, "vectors must be non-empty");
}

double mean_of(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error(ErrorCode::InsufficientVariance, "Pearson r of a constant vector");
  return sxy / std::sqrt(sxx * syy);
}

double mean_absolute_error(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Rank-sum with average ranks for ties.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::EmptyClass, "AUC needs both label classes");
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

FoldMetrics evaluate_fold(std::span<const AdgProblem> test, std::span<const std::vector<double>> risks,
                          const Threshold& tau_hat, double margin_m, Filtering filtering) {
  if (test.size() != risks.size()) throw Error(ErrorCode::InvalidArgument, "one risk vector per test problem");
  FoldMetrics out;
  out.n_problems = test.size();
  if (test.empty()) return out;
  std::size_t covered = 0, retained = 0, claims = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto grid = build_tau_grid(risks[i], margin_m);
    const auto pred = hard_predict(test[i], risks[i], grid, tau_hat, filtering);
    if (is_valid_retention(test[i], pred.retained, filtering)) ++covered;
    retained += pred.retained.size();
    claims += test[i].size();
  }
  const double n = static_cast<double>(test.size());
  out.coverage = static_cast<double>(covered) / n;
  out.retention_mean = static_cast<double>(retained) / n;
  out.retention_fraction = claims == 0 ? 0.0 : static_cast<double>(retained) / static_cast<double>(claims);
  return out;
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Dcf: return "dcf";
    case Method::Cf: return "cf";
    case Method::Independent: return "independent";
    case Method::BoostedIndependent: return "boosted-independent";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::Dcf, Method::Cf, Method::Independent, Method::BoostedIndependent})
    if (method_name(m) == name) return m;
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(name) + "'");
}

double AgreementRow::agree_pct() const {
  const std::size_t t = total();
  return t == 0 ? 100.0 : 100.0 * static_cast<double>(both_incl + both_excl) / static_cast<double>(t);
}

void mark_target(MethodRow& row) {
  const double target = 1.0 - row.alpha;
  constexpr double kSlack = 1e-12;
  row.meets_target = row.coverage + kSlack >= target;
  row.near_miss = !row.meets_target && row.coverage + 0.005 + kSlack >= target;
}

FoldSplit monte_carlo_split(std::size_t n, double train_share, double val_share, std::uint64_t seed,
                            std::size_t fold) {
  if (!(train_share > 0.0 && val_share > 0.0 && train_share + val_share < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "split shares must be positive and sum below 1");
  }
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_share));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_share));
  if (n_train < 2 || n_val < 1 || n_train + n_val >= n) {
    throw Error(ErrorCode::TooFewProblems,
                "dataset of " + std::to_string(n) + " problems is too small for a train/val/test split");
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  FoldSplit out;
  out.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  out.val.assign(idx.begin() + static_cast<long>(n_train), idx.begin() + static_cast<long>(n_train + n_val));
  out.test.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
  return out;
}

double max_frequency(std::span<const AdgProblem> problems) {
  double c = 0.0;
  bool any = false;
  for (const auto& p : problems) {
    for (const auto& claim : p.claims()) {
      if (!claim.freq) throw Error(ErrorCode::MissingFrequency, "problem '" + p.id() + "' lacks frequencies");
      c = any ? std::max(c, *claim.freq) : *claim.freq;
      any = true;
    }
  }
  return c;
}

ScorerParams fit_logistic_scorer(std::span<const AdgProblem> train, std::size_t n_features, std::size_t steps,
                                 double learning_rate) {
  std::vector<double> params(n_features + 1, 0.0);
  AdamState adam(params.size(), learning_rate);
  std::size_t n_claims = 0;
  for (const auto& p : train) n_claims += p.size();
  if (n_claims == 0) throw Error(ErrorCode::TooFewProblems, "logistic fit needs at least one claim");
  std::vector<double> grad(params.size());
  for (std::size_t step = 0; step < steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& p : train) {
      for (const auto& c : p.claims()) {
        if (c.features.size() != n_features) throw Error(ErrorCode::SchemaMismatch, "feature length mismatch");
        double z = params.back();
        for (std::size_t i = 0; i < n_features; ++i) z += params[i] * c.features[i];
        const double prob = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        const double d = prob - static_cast<double>(c.label);
        for (std::size_t i = 0; i < n_features; ++i) grad[i] += d * c.features[i];
        grad.back() += d;
      }
    }
    for (double& g : grad) g /= static_cast<double>(n_claims);
    adam_step(adam, params, grad);
  }
  ScorerParams out;
  out.weights.assign(params.begin(), params.end() - 1);
  out.bias = params.back();
  return out;
}

namespace {

std::vector<AdgProblem> pick(std::span<const AdgProblem> all, const std::vector<std::size_t>& idx) {
  std::vector<AdgProblem> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

std::vector<std::vector<double>> linear_risks(std::span<const AdgProblem> ps, const ScorerParams& scorer) {
  std::vector<std::vector<double>> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(risk_scores(scorer, p));
  return out;
}

std::vector<std::vector<double>> freq_risks(std::span<const AdgProblem> ps, double beta_mix, double c_freq) {
  std::vector<std::vector<double>> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(frequency_baseline_risk(p, beta_mix, c_freq));
  return out;
}

FoldMetrics calibrate_and_test(std::span<const AdgProblem> cal, std::span<const std::vector<double>> cal_risks,
                               std::span<const AdgProblem> test, std::span<const std::vector<double>> test_risks,
                               double alpha, double margin_m, Filtering filtering) {
  const auto th = hard_calibrate(cal, cal_risks, alpha, margin_m, filtering);
  return evaluate_fold(test, test_risks, th.tau_hat, margin_m, filtering);
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), 0x7a11u};
  std::mt19937_64 rng(seq);
  return rng();
}

// Rows of one fold, ordered alpha-major then by method.
std::vector<MethodRow> run_fold(std::span<const AdgProblem> dataset, std::size_t n_features,
                                const EvalOptions& opt, std::span<const SoftConfig> dcf_soft, std::size_t fold) {
  const auto split = monte_carlo_split(dataset.size(), opt.train_share, opt.val_share, opt.seed, fold);
  const auto train = pick(dataset, split.train);
  const auto val = pick(dataset, split.val);
  const auto test = pick(dataset, split.test);

  const bool wants_freq = std::any_of(opt.methods.begin(), opt.methods.end(),
                                      [](Method m) { return m == Method::Cf || m == Method::Independent; });
  const double c_freq = wants_freq ? max_frequency(dataset) : 0.0;

  std::optional<ScorerParams> logistic;
  std::vector<MethodRow> rows;
  for (std::size_t ai = 0; ai < opt.alphas.size(); ++ai) {
    const double alpha = opt.alphas[ai];
    for (Method method : opt.methods) {
      FoldMetrics m;
      switch (method) {
        case Method::Cf: {
          double best_beta = opt.beta_mix_grid.empty() ? 0.0 : opt.beta_mix_grid.front();
          double best_ret = -1.0;
          for (double b : opt.beta_mix_grid) {
            const auto fm = calibrate_and_test(train, freq_risks(train, b, c_freq), val, freq_risks(val, b, c_freq),
                                               alpha, opt.margin_m, Filtering::Coherent);
            if (fm.retention_mean > best_ret) {
              best_ret = fm.retention_mean;
              best_beta = b;
            }
          }
          m = calibrate_and_test(train, freq_risks(train, best_beta, c_freq), test,
                                 freq_risks(test, best_beta, c_freq), alpha, opt.margin_m, Filtering::Coherent);
          break;
        }
        case Method::Independent:
          m = calibrate_and_test(train, freq_risks(train, 0.0, c_freq), test, freq_risks(test, 0.0, c_freq), alpha,
                                 opt.margin_m, Filtering::Independent);
          break;
        case Method::Dcf: {
          TrainConfig tc = opt.train;
          tc.alpha = alpha;
          tc.soft = dcf_soft[ai];
          tc.seed = fold_seed(opt.train.seed ^ opt.seed, fold);
          const auto result = train_scorer(train, val, n_features, tc);
          m = calibrate_and_test(train, linear_risks(train, result.scorer), test, linear_risks(test, result.scorer),
                                 alpha, opt.margin_m, Filtering::Coherent);
          break;
        }
        case Method::BoostedIndependent: {
          if (!logistic) logistic = fit_logistic_scorer(train, n_features);
          m = calibrate_and_test(train, linear_risks(train, *logistic), test, linear_risks(test, *logistic), alpha,
                                 opt.margin_m, Filtering::Independent);
          break;
        }
      }
      MethodRow row;
      row.method = method;
      row.alpha = alpha;
      row.fold = fold;
      row.coverage = m.coverage;
      row.retention_mean = m.retention_mean;
      row.retention_fraction = m.retention_fraction;
      mark_target(row);
      rows.push_back(row);
    }
  }
  return rows;
}


// Runs body(0..n-1) on up to `jobs` threads; the first exception wins.
template <class Body>
void parallel_for(std::size_t n, std::size_t jobs, Body body) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
        return;
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(jobs);
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

// Fold tag of the tuning resplit; distinct from every evaluation fold.
constexpr std::size_t kTuningFold = 0xFFFFFFFFu;

std::vector<SoftConfig> select_dcf_soft(std::span<const AdgProblem> dataset, std::size_t n_features,
                                        const EvalOptions& opt) {
  const std::size_t k = opt.dcf_search.size();
  const std::size_t reps = std::max<std::size_t>(opt.search_repeats, 1);
  // No test part on tuning resplits: every non-training problem validates.
  std::vector<std::vector<AdgProblem>> trains, vals;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto split = monte_carlo_split(dataset.size(), opt.train_share, opt.val_share, opt.seed, kTuningFold - r);
    trains.push_back(pick(dataset, split.train));
    auto val = pick(dataset, split.val);
    for (std::size_t i : split.test) val.push_back(dataset[i]);
    vals.push_back(std::move(val));
  }
  // Task index = (alpha, candidate, repeat), repeat fastest.
  std::vector<double> retention(opt.alphas.size() * k * reps, 0.0);
  parallel_for(retention.size(), opt.jobs, [&](std::size_t i) {
    const std::size_t r = i % reps;
    const std::size_t c = (i / reps) % k;
    const std::size_t a = i / (reps * k);
    TrainConfig tc = opt.train;
    tc.alpha = opt.alphas[a];
    tc.soft = opt.dcf_search[c];
    tc.seed = fold_seed(opt.train.seed ^ opt.seed, kTuningFold - r);
    const auto result = train_scorer(trains[r], vals[r], n_features, tc);
    retention[i] = calibrate_and_test(trains[r], linear_risks(trains[r], result.scorer), vals[r],
                                      linear_risks(vals[r], result.scorer), tc.alpha, opt.margin_m,
                                      Filtering::Coherent)
                       .retention_mean;
  });
  auto score = [&](std::size_t a, std::size_t c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < reps; ++r) sum += retention[(a * k + c) * reps + r];
    return sum;
  };
  std::vector<SoftConfig> out;
  for (std::size_t a = 0; a < opt.alphas.size(); ++a) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (score(a, c) > score(a, best)) best = c;
    out.push_back(opt.dcf_search[best]);
  }
  return out;
}

}  // namespace

EvalReport cross_validate(std::span<const AdgProblem> dataset, std::size_t n_features, const EvalOptions& options) {
  if (options.folds == 0) throw Error(ErrorCode::InvalidArgument, "at least one fold is required");
  if (options.alphas.empty() || options.methods.empty()) {
    throw Error(ErrorCode::InvalidArgument, "at least one alpha and one method are required");
  }
  for (double a : options.alphas)
    if (!(a > 0.0 && a < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
  // Fail early, before any worker starts.
  monte_carlo_split(dataset.size(), options.train_share, options.val_share, options.seed, 0);

  std::vector<SoftConfig> dcf_soft(options.alphas.size(), options.train.soft);
  std::vector<std::pair<double, SoftConfig>> selected;
  const bool wants_dcf = std::find(options.methods.begin(), options.methods.end(), Method::Dcf) != options.methods.end();
  if (wants_dcf && !options.dcf_search.empty()) {
    dcf_soft = select_dcf_soft(dataset, n_features, options);
    for (std::size_t a = 0; a < options.alphas.size(); ++a) selected.emplace_back(options.alphas[a], dcf_soft[a]);
  }

  std::vector<std::vector<MethodRow>> per_fold(options.folds);
  parallel_for(options.folds, options.jobs,
               [&](std::size_t f) { per_fold[f] = run_fold(dataset, n_features, options, dcf_soft, f); });

  EvalReport report;
  report.dcf_selected = std::move(selected);
  const std::size_t per_row = options.methods.size();
  for (std::size_t a = 0; a < options.alphas.size(); ++a) {
    for (std::size_t m = 0; m < per_row; ++m) {
      MethodRow agg;
      agg.method = options.methods[m];
      agg.alpha = options.alphas[a];
      for (std::size_t f = 0; f < options.folds; ++f) {
        const MethodRow& r = per_fold[f][a * per_row + m];
        report.rows.push_back(r);
        agg.coverage += r.coverage;
        agg.retention_mean += r.retention_mean;
        agg.retention_fraction += r.retention_fraction;
      }
      const double nf = static_cast<double>(options.folds);
      agg.coverage /= nf;
      agg.retention_mean /= nf;
      agg.retention_fraction /= nf;
      mark_target(agg);
      report.rows.push_back(agg);
    }
  }
  return report;
}

std::vector<AgreementRow> soft_hard_agreement(std::span<const AdgProblem> dataset,
                                              std::span<const std::vector<double>> risks, const SoftConfig& cfg,
                                              std::span<const double> alphas, QuantileOrientation orientation) {
  if (dataset.size() != risks.size()) throw Error(ErrorCode::InvalidArgument, "one risk vector per problem");
  cfg.validate();
  std::vector<AgreementRow> out;
  for (double alpha : alphas) {
    AgreementRow row;
    row.alpha = alpha;
    if (!dataset.empty()) {
      const auto hard = hard_calibrate(dataset, risks, alpha, cfg.margin_m, Filtering::Coherent, orientation);
      const auto soft = soft_calibrate_values(dataset, risks, alpha, cfg, orientation);
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto grid = build_tau_grid(risks[i], cfg.margin_m);
        const auto hp = hard_predict(dataset[i], risks[i], grid, hard.tau_hat);
        const auto q = soft_predict_values(dataset[i], risks[i], soft.tau_hat, cfg);
        std::vector<bool> in_hard(dataset[i].size(), false);
        for (ClaimId v : hp.retained) in_hard[v] = true;
        for (ClaimId v = 0; v < dataset[i].size(); ++v) {
          const bool s = q[v] >= 0.5;
          const bool h = in_hard[v];
          if (s && h) ++row.both_incl;
          else if (s) ++row.soft_only;
          else if (h) ++row.hard_only;
          else ++row.both_excl;
        }
      }
    }
    out.push_back(row);
  }
  return out;
}

CalibrationCorrelation calibration_correlation(std::span<const AdgProblem> dataset,
                                               std::span<const std::vector<double>> risks, const SoftConfig& cfg,
                                               std::span<const double> alphas, QuantileOrientation orientation) {
  if (dataset.size() != risks.size()) throw Error(ErrorCode::InvalidArgument, "one risk vector per problem");
  cfg.validate();
  std::vector<AdgProblem> kept;
  std::vector<std::vector<double>> kept_risks;
  CalibrationCorrelation out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].false_count() == 0) continue;
    kept.push_back(dataset[i]);
    kept_risks.push_back(risks[i]);
    const auto grid = build_tau_grid(risks[i], cfg.margin_m);
    out.hard_scores.push_back(hard_nonconformity(dataset[i], risks[i], grid));
    out.soft_scores.push_back(soft_nonconformity_value(dataset[i], risks[i], cfg));
  }
  if (kept.size() < 3) {
    throw Error(ErrorCode::TooFewProblems, "calibration correlation needs at least 3 problems with a false claim");
  }
  out.scores.pearson_r = pearson(out.soft_scores, out.hard_scores);
  out.scores.mae = mean_absolute_error(out.soft_scores, out.hard_scores);
  out.scores.n = kept.size();

  std::vector<double> soft_th, hard_th;
  for (double alpha : alphas) {
    const auto hard = hard_calibrate(kept, kept_risks, alpha, cfg.margin_m, Filtering::Coherent, orientation);
    const auto soft = soft_calibrate_values(kept, kept_risks, alpha, cfg, orientation);
    if (hard.tau_hat.is_finite() && soft.tau_hat.is_finite()) {
      hard_th.push_back(hard.tau_hat.value());
      soft_th.push_back(soft.tau_hat.value());
    }
  }
  if (soft_th.size() >= 2) {
    Correlation c;
    c.n = soft_th.size();
    c.mae = mean_absolute_error(soft_th, hard_th);
    try {
      c.pearson_r = pearson(soft_th, hard_th);
      out.thresholds = c;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientVariance) throw;
    }
  }
  return out;
}

ContributionReport feature_contributions(const ScorerParams& scorer, const FeatureSchema& schema,
                                         std::span<const double> features) {
  if (scorer.weights.size() != schema.size() || features.size() != schema.size()) {
    throw Error(ErrorCode::SchemaMismatch, "scorer, schema and feature vector lengths differ");
  }
  ContributionReport out;
  out.bias = scorer.bias;
  out.total = scorer.bias;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    FeatureContribution fc{schema.names()[i], features[i], scorer.weights[i], scorer.weights[i] * features[i]};
    out.total += fc.contribution;
    out.features.push_back(std::move(fc));
  }
  std::stable_sort(out.features.begin(), out.features.end(), [](const auto& a, const auto& b) {
    return std::abs(a.contribution) > std::abs(b.contribution);
  });
  return out;
}

SeparationMetrics separation_metrics(std::span<const double> scores, std::span<const int> labels,
                                     std::span<const double> pooled) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
  if (pooled.empty()) throw Error(ErrorCode::InvalidArgument, "pooled scores must be non-empty");
  const double mu = mean_of(pooled);
  double var = 0.0;
  for (double x : pooled) var += (x - mu) * (x - mu);
  var /= static_cast<double>(pooled.size());
  if (var <= 0.0) throw Error(ErrorCode::InsufficientVariance, "pooled scores are constant");
  const double sd = std::sqrt(var);

  std::vector<double> z(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) z[i] = (scores[i] - mu) / sd;
  double sum_t = 0.0, sum_f = 0.0;
  std::size_t n_t = 0, n_f = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (labels[i] == 1) {
      sum_t += z[i];
      ++n_t;
    } else {
      sum_f += z[i];
      ++n_f;
    }
  }
  if (n_t == 0 || n_f == 0) throw Error(ErrorCode::EmptyClass, "separation needs both label classes");

  SeparationMetrics out;
  out.separation = sum_t / static_cast<double>(n_t) - sum_f / static_cast<double>(n_f);
  const double zmu = mean_of(z);
  double zvar = 0.0;
  for (double x : z) zvar += (x - zmu) * (x - zmu);
  zvar /= static_cast<double>(z.size());
  out.cohens_d = zvar > 0.0 ? out.separation / std::sqrt(zvar) : 0.0;

  constexpr std::size_t kBins = 64;
  double lo = (pooled[0] - mu) / sd, hi = lo;
  for (double x : pooled) {
    lo = std::min(lo, (x - mu) / sd);
    hi = std::max(hi, (x - mu) / sd);
  }
  for (double x : z) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  std::vector<double> ht(kBins, 0.0), hf(kBins, 0.0);
  const double width = (hi - lo) / static_cast<double>(kBins);
  for (std::size_t i = 0; i < z.size(); ++i) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((z[i] - lo) / width) : 0;
    b = std::min(b, kBins - 1);
    (labels[i] == 1 ? ht : hf)[b] += 1.0;
  }
  for (std::size_t b = 0; b < kBins; ++b)
    out.overlap += std::min(ht[b] / static_cast<double>(n_t), hf[b] / static_cast<double>(n_f));
  return out;
}

}  // namespace cohconf
