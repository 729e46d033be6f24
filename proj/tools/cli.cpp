#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cohconf/data_io.hpp"
#include "cohconf/dcf.hpp"
#include "cohconf/error.hpp"
#include "cohconf/evaluation.hpp"
#include "cohconf/graph_features.hpp"
#include "cohconf/hard_cf.hpp"
#include "cohconf/training.hpp"
#include "json.hpp"

namespace cohconf::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidConfig:
      return kUsage;
    case ErrorCode::NonFiniteValue:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::DegenerateWeights:
    case ErrorCode::InsufficientVariance:
      return kNumeric;
    default:
      return kData;
  }
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string threshold_text(const Threshold& t) {
  switch (t.kind()) {
    case Threshold::Kind::NegInf: return "-inf";
    case Threshold::Kind::PosInf: return "+inf";
    case Threshold::Kind::Finite: break;
  }
  return format_double(t.value());
}

json threshold_json(const Threshold& t) {
  if (t.is_finite()) return t.value();
  return threshold_text(t);
}

Threshold parse_threshold(const std::string& text) {
  if (text == "-inf") return Threshold::neg_inf();
  if (text == "+inf" || text == "inf") return Threshold::pos_inf();
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must be a finite number, -inf or +inf, got '" + text + "'");
  }
  return Threshold::finite(v);
}

double parse_number(const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (text.empty() || pos != text.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::InvalidArgument, "not a number: '" + text + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

// Single-output commands accept either a file path (with extension) or a
// directory that receives `default_name`.
fs::path output_file(const std::string& out, const std::string& default_name) {
  fs::path p(out);
  if (!p.has_extension()) p /= default_name;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

fs::path output_dir(const std::string& out) {
  fs::path p(out);
  fs::create_directories(p);
  return p;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool quiet = false;
  std::optional<std::size_t> jobs;
};

std::optional<std::uint64_t> resolve_seed(const Globals& g) {
  if (g.seed) return g.seed;
  if (const char* env = std::getenv("COHCONF_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw Error(ErrorCode::InvalidArgument, std::string("COHCONF_SEED is not an integer: ") + env);
    return static_cast<std::uint64_t>(v);
  }
  return std::nullopt;
}

std::vector<std::vector<double>> scorer_risks(const std::vector<AdgProblem>& problems, const ScorerParams& scorer) {
  std::vector<std::vector<double>> risks;
  risks.reserve(problems.size());
  for (const auto& p : problems) risks.push_back(risk_scores(scorer, p));
  return risks;
}

void check_schema(const Dataset& data, const Checkpoint& model) {
  if (!(data.schema == model.schema)) {
    throw Error(ErrorCode::SchemaMismatch, "dataset schema does not match the model schema");
  }
}

Filtering parse_filtering(bool independent) { return independent ? Filtering::Independent : Filtering::Coherent; }

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string config;
  std::optional<std::size_t> n_problems;
};

void cmd_synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
  SynthConfig cfg;
  if (!a.config.empty()) cfg = parse_synth_config(read_text_file(a.config));
  if (a.n_problems) cfg.n_problems = *a.n_problems;
  if (auto s = resolve_seed(g)) cfg.seed = *s;
  cfg.validate();
  const Dataset data = generate_synthetic(cfg);
  const auto path = output_file(g.out, "dataset.json");
  save_dataset(data, path);
  if (!g.quiet) out << "wrote " << data.problems.size() << " problems to " << path.string() << "\n";
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  double alpha = 0.05;
  std::string hp;
  double val_fraction = 0.15;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> patience;
};

void cmd_train(const TrainArgs& a, bool alpha_given, const Globals& g, std::ostream& out) {
  const Dataset data = load_dataset(a.data);
  TrainConfig cfg;
  if (!a.hp.empty()) cfg = parse_hyperparameters(read_text_file(a.hp), cfg);
  if (alpha_given || a.hp.empty()) cfg.alpha = a.alpha;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.patience) cfg.patience = *a.patience;
  cfg.patience = std::min(cfg.patience, cfg.epochs);
  if (auto s = resolve_seed(g)) cfg.seed = *s;
  cfg.validate();
  if (!(a.val_fraction > 0.0 && a.val_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "--val-fraction must lie in (0,1)");
  }

  const std::size_t n = data.problems.size();
  if (n < 3) throw Error(ErrorCode::TooFewProblems, "training needs at least 3 problems");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * a.val_fraction)), 1, n - 2);
  std::vector<AdgProblem> val, train;
  for (std::size_t i = 0; i < n; ++i) (i < n_val ? val : train).push_back(data.problems[idx[i]]);

  const TrainResult result = train_scorer(train, val, data.schema.size(), cfg);
  if (!g.quiet) {
    for (const auto& e : result.log) {
      out << "epoch " << e.epoch << " train_loss " << format_double(e.train_loss) << " val " << format_double(e.val_metric)
          << (e.improved ? " *" : "") << "\n";
    }
  }
  Checkpoint ckpt{data.schema, result.scorer, cfg};
  const auto path = output_file(g.out, "model.json");
  save_checkpoint(ckpt, path);
  if (!g.quiet) out << "best epoch " << result.best_epoch << ", wrote " << path.string() << "\n";
}

// ---------------------------------------------------------------- calibrate / predict

struct CalibrateArgs {
  std::string data;
  std::string model;
  double alpha = 0.1;
  std::string mode = "hard";
  bool independent = false;
};

void cmd_calibrate(const CalibrateArgs& a, const Globals& g, std::ostream& out) {
  const Dataset data = load_dataset(a.data);
  const Checkpoint model = load_checkpoint(a.model);
  check_schema(data, model);
  const auto risks = scorer_risks(data.problems, model.scorer);
  const SoftConfig& soft = model.config.soft;
  Threshold tau_hat = Threshold::neg_inf();
  if (a.mode == "hard") {
    tau_hat = hard_calibrate(data.problems, risks, a.alpha, soft.margin_m, parse_filtering(a.independent),
                             model.config.orientation)
                  .tau_hat;
  } else {
    tau_hat = soft_calibrate_values(data.problems, risks, a.alpha, soft, model.config.orientation).tau_hat;
  }
  json doc;
  doc["mode"] = a.mode;
  doc["alpha"] = a.alpha;
  doc["n_cal"] = data.problems.size();
  doc["tau_hat"] = threshold_json(tau_hat);
  const auto path = output_file(g.out, "calibration.json");
  write_text_file(path, doc.dump(1) + "\n");
  if (!g.quiet) out << "tau_hat " << threshold_text(tau_hat) << "\n";
}

struct PredictArgs {
  std::string data;
  std::string model;
  std::string tau_hat;
  std::string mode = "hard";
  bool independent = false;
};

void cmd_predict(const PredictArgs& a, const Globals& g, std::ostream& out) {
  const Dataset data = load_dataset(a.data);
  const Checkpoint model = load_checkpoint(a.model);
  check_schema(data, model);
  const Threshold tau_hat = parse_threshold(a.tau_hat);
  const SoftConfig& soft = model.config.soft;
  json doc;
  doc["mode"] = a.mode;
  doc["tau_hat"] = threshold_json(tau_hat);
  json problems = json::array();
  std::size_t total = 0;
  for (const auto& p : data.problems) {
    const auto risks = risk_scores(model.scorer, p);
    json row;
    row["id"] = p.id();
    ClaimSet retained;
    if (a.mode == "hard") {
      const auto grid = build_tau_grid(risks, soft.margin_m);
      const auto pred = hard_predict(p, risks, grid, tau_hat, parse_filtering(a.independent));
      retained = pred.retained;
      row["tau_star"] = threshold_json(pred.tau_star);
    } else {
      const auto q = soft_predict_values(p, risks, tau_hat, soft);
      retained = round_retention(q);
      row["q"] = q;
    }
    row["retained"] = retained;
    total += retained.size();
    problems.push_back(std::move(row));
    if (!g.quiet) {
      out << p.id() << ":";
      for (ClaimId v : retained) out << " " << v;
      out << "\n";
    }
  }
  doc["problems"] = std::move(problems);
  const auto path = output_file(g.out, "predictions.json");
  write_text_file(path, doc.dump(1) + "\n");
  if (!g.quiet) out << "retained " << total << " claims over " << data.problems.size() << " problems\n";
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string data;
  std::string alphas = "0.05,0.10";
  std::string methods = "dcf,cf,independent";
  std::size_t folds = 20;
  std::string hp;
  double margin = 20.0;
  bool search = false;
};

void cmd_eval(const EvalArgs& a, const Globals& g, std::ostream& out) {
  const Dataset data = load_dataset(a.data);
  EvalOptions opt;
  opt.alphas = parse_alpha_list(a.alphas);
  opt.methods.clear();
  for (const auto& m : split(a.methods, ',')) opt.methods.push_back(parse_method(m));
  opt.folds = a.folds;
  opt.margin_m = a.margin;
  if (!a.hp.empty()) opt.train = parse_hyperparameters(read_text_file(a.hp), opt.train);
  if (a.search) opt.dcf_search = SoftConfig::search_grid();
  if (auto s = resolve_seed(g)) {
    opt.seed = *s;
    opt.train.seed = *s;
  }
  opt.jobs = g.jobs.value_or(std::max(1u, std::thread::hardware_concurrency()));
  const EvalReport report = cross_validate(data.problems, data.schema.size(), opt);
  const auto dir = output_dir(g.out);
  emit_report(report, dir / "eval.csv", ReportFormat::Csv);
  emit_report(report, dir / "eval_summary.txt", ReportFormat::Summary);
  if (!g.quiet) out << report_summary(report);
}

// ---------------------------------------------------------------- validate-surrogate

struct SurrogateArgs {
  std::string data;
  std::string model;
  std::string temps = "sharp";
  std::string alphas = "0.03..0.10";
};

void cmd_validate_surrogate(const SurrogateArgs& a, const Globals& g, std::ostream& out) {
  const Dataset data = load_dataset(a.data);
  const SoftConfig cfg = SoftConfig::preset(a.temps);
  QuantileOrientation orientation = QuantileOrientation::Lower;
  std::vector<std::vector<double>> risks;
  if (!a.model.empty()) {
    const Checkpoint model = load_checkpoint(a.model);
    check_schema(data, model);
    risks = scorer_risks(data.problems, model.scorer);
    orientation = model.config.orientation;
  } else {
    const double c = max_frequency(data.problems);
    for (const auto& p : data.problems) risks.push_back(frequency_baseline_risk(p, 0.0, c));
  }
  const auto alphas = parse_alpha_list(a.alphas);
  const auto agreement = soft_hard_agreement(data.problems, risks, cfg, alphas, orientation);
  const auto corr = calibration_correlation(data.problems, risks, cfg, alphas, orientation);
  const auto dir = output_dir(g.out);
  write_text_file(dir / "agreement.csv", agreement_to_csv(agreement));
  write_text_file(dir / "correlation.csv", correlation_to_csv(corr));
  if (!g.quiet) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "scores: r=%.4f mae=%.4f (n=%zu)\n", corr.scores.pearson_r, corr.scores.mae,
                  corr.scores.n);
    out << buf;
    if (corr.thresholds) {
      std::snprintf(buf, sizeof buf, "thresholds: r=%.4f mae=%.4f\n", corr.thresholds->pearson_r,
                    corr.thresholds->mae);
      out << buf;
    }
    for (const auto& row : agreement) {
      std::snprintf(buf, sizeof buf, "alpha %.2f: agree %.2f%% (both %zu, soft-only %zu, hard-only %zu, neither %zu)\n",
                    row.alpha, row.agree_pct(), row.both_incl, row.soft_only, row.hard_only, row.both_excl);
      out << buf;
    }
  }
}

// ---------------------------------------------------------------- features

struct FeaturesArgs {
  std::string data;
  std::string write_dataset;
};

void cmd_features(const FeaturesArgs& a, const Globals& g, std::ostream& out) {
  Dataset data = load_dataset(a.data);
  std::ostringstream csv;
  csv << "problem,claim";
  for (auto name : structural_feature_names()) csv << "," << name;
  csv << "\n";
  for (const auto& p : data.problems) {
    const auto feats = compute_structural_features(p);
    for (ClaimId v = 0; v < p.size(); ++v) {
      csv << p.id() << "," << v;
      for (double x : feats[v].values()) csv << "," << format_double(x);
      csv << "\n";
    }
  }
  const auto dir = output_dir(g.out);
  write_text_file(dir / "features.csv", csv.str());
  if (!a.write_dataset.empty()) {
    const std::size_t filled = refresh_structural_features(data);
    save_dataset(data, a.write_dataset);
    if (!g.quiet) out << "refreshed " << filled << " schema columns in " << a.write_dataset << "\n";
  }
  if (!g.quiet) out << "wrote " << (dir / "features.csv").string() << "\n";
}

}  // namespace

std::vector<double> parse_alpha_list(const std::string& text) {
  std::vector<double> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    std::string hi_text = text.substr(dots + 2);
    double step = 0.01;
    if (const auto colon = hi_text.find(':'); colon != std::string::npos) {
      step = parse_number(hi_text.substr(colon + 1));
      hi_text = hi_text.substr(0, colon);
    }
    const double lo = parse_number(text.substr(0, dots));
    const double hi = parse_number(hi_text);
    if (!(step > 0.0) || hi < lo) throw Error(ErrorCode::InvalidArgument, "bad alpha range '" + text + "'");
    // Integer stepping avoids accumulating 0.01 increments.
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= count; ++i) out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  } else {
    for (const auto& part : split(text, ',')) out.push_back(parse_number(part));
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no alpha values given");
  for (double x : out) {
    if (!(x > 0.0 && x < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1), got " + format_double(x));
  }
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coherent conformal claim filtering: synthetic data, training, calibration and evaluation.", "cohconf"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed_value = 0;
  std::size_t jobs_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Random seed (falls back to $COHCONF_SEED, then the config file)");
  app.add_option("--out", g.out, "Output file or directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  auto* jobs_opt =
      app.add_option("--jobs", jobs_value, "Worker threads (default: all cores for eval, 1 otherwise)")
          ->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic claim-graph dataset");
  synth_cmd->add_option("--config", synth.config, "Synthetic-data config (JSON)");
  synth_cmd->add_option("--n-problems", synth.n_problems, "Override the number of problems (config default 500)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a linear scorer through the differentiable pipeline");
  train_cmd->add_option("--data", train.data, "Dataset (JSON)")->required();
  auto* alpha_opt = train_cmd->add_option("--alpha", train.alpha, "Target miscoverage")->capture_default_str();
  train_cmd->add_option("--hp", train.hp, "Hyperparameter file (JSON)");
  train_cmd->add_option("--val-fraction", train.val_fraction, "Share of problems held out for early stopping")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs, "Override the epoch budget (default 100)");
  train_cmd->add_option("--patience", train.patience, "Override the early-stopping patience (default 10)");

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Calibrate a threshold on a dataset");
  cal_cmd->add_option("--data", cal.data, "Calibration dataset (JSON)")->required();
  cal_cmd->add_option("--model", cal.model, "Model checkpoint (JSON)")->required();
  cal_cmd->add_option("--alpha", cal.alpha, "Target miscoverage")->capture_default_str();
  cal_cmd->add_option("--mode", cal.mode, "hard or soft")->check(CLI::IsMember({"hard", "soft"}))->capture_default_str();
  cal_cmd->add_flag("--independent", cal.independent, "Hard mode: ignore graph structure");

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Filter claims with a calibrated threshold");
  pred_cmd->add_option("--data", pred.data, "Dataset (JSON)")->required();
  pred_cmd->add_option("--model", pred.model, "Model checkpoint (JSON)")->required();
  pred_cmd->add_option("--tau-hat", pred.tau_hat, "Calibrated threshold: a number, -inf or +inf")->required();
  pred_cmd->add_option("--mode", pred.mode, "hard or soft")->check(CLI::IsMember({"hard", "soft"}))->capture_default_str();
  pred_cmd->add_flag("--independent", pred.independent, "Hard mode: ignore graph structure");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Monte-Carlo cross-validation of filtering methods");
  eval_cmd->add_option("--data", ev.data, "Dataset (JSON)")->required();
  eval_cmd->add_option("--alphas", ev.alphas, "Alpha list (a,b,c) or range lo..hi[:step]")->capture_default_str();
  eval_cmd->add_option("--methods", ev.methods, "Comma list of dcf, cf, independent, boosted-independent")
      ->capture_default_str();
  eval_cmd->add_option("--folds", ev.folds, "Monte-Carlo folds")->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--hp", ev.hp, "Hyperparameter file for DCF training (JSON)");
  eval_cmd->add_flag("--search", ev.search, "Pick DCF temperatures per alpha from the built-in grid");
  eval_cmd->add_option("--margin", ev.margin, "Threshold-grid margin")->check(CLI::PositiveNumber)->capture_default_str();

  SurrogateArgs sur;
  auto* sur_cmd = app.add_subcommand("validate-surrogate", "Compare the differentiable pipeline with hard CF");
  sur_cmd->add_option("--data", sur.data, "Dataset (JSON)")->required();
  sur_cmd->add_option("--model", sur.model, "Model checkpoint; frequency risks when omitted");
  sur_cmd->add_option("--temps", sur.temps, "Temperature preset: sharp, practical or train-default")
      ->check(CLI::IsMember({"sharp", "practical", "paper", "paper-validation", "train-default"}))
      ->capture_default_str();
  sur_cmd->add_option("--alphas", sur.alphas, "Alpha list (a,b,c) or range lo..hi[:step]")->capture_default_str();

  FeaturesArgs feat;
  auto* feat_cmd = app.add_subcommand("features", "Compute structural graph features per claim");
  feat_cmd->add_option("--data", feat.data, "Dataset (JSON)")->required();
  feat_cmd->add_option("--write-dataset", feat.write_dataset, "Also save the dataset with refreshed nx_* columns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // app.exit prints the help of whichever subcommand asked for it.
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  if (seed_opt->count() > 0) g.seed = seed_value;
  if (jobs_opt->count() > 0) g.jobs = jobs_value;

  try {
    if (*synth_cmd) cmd_synth(synth, g, out);
    else if (*train_cmd) cmd_train(train, alpha_opt->count() > 0, g, out);
    else if (*cal_cmd) cmd_calibrate(cal, g, out);
    else if (*pred_cmd) cmd_predict(pred, g, out);
    else if (*eval_cmd) cmd_eval(ev, g, out);
    else if (*sur_cmd) cmd_validate_surrogate(sur, g, out);
    else if (*feat_cmd) cmd_features(feat, g, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cohconf::cli
