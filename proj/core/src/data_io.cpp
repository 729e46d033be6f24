#include "cohconf/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "cohconf/error.hpp"
#include "cohconf/graph_features.hpp"
#include "json.hpp"

namespace cohconf {

using json = nlohmann::ordered_json;

namespace {

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ParseError, std::string(what) + " at line " + std::to_string(line) + ", column " +
                                           std::to_string(col) + " (byte " + std::to_string(e.byte) + ")");
  }
}

double finite_number(const json& j, const std::string& context) {
  if (!j.is_number()) throw Error(ErrorCode::ValidationError, context + " must be a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw Error(ErrorCode::ValidationError, context + " must be finite");
  return x;
}

AdgProblem parse_problem(const json& jp, const FeatureSchema& schema, std::size_t index, std::size_t& missing) {
  std::string id = "#" + std::to_string(index);
  if (jp.contains("id")) {
    if (!jp["id"].is_string()) throw Error(ErrorCode::ValidationError, "problem " + id + ": id must be a string");
    id = jp["id"].get<std::string>();
  }
  const std::string where = "problem '" + id + "'";
  try {
    if (!jp.is_object()) throw Error(ErrorCode::ValidationError, "entry is not an object");
    if (!jp.contains("claims") || !jp["claims"].is_array()) {
      throw Error(ErrorCode::ValidationError, "missing \"claims\" array");
    }
    const json& jc = jp["claims"];
    std::vector<std::pair<long, Claim>> claims;
    bool any_id = false, all_id = true;
    for (std::size_t c = 0; c < jc.size(); ++c) {
      const json& x = jc[c];
      const std::string cw = "claim " + std::to_string(c);
      if (!x.is_object()) throw Error(ErrorCode::ValidationError, cw + " is not an object");
      Claim claim;
      claim.features.assign(schema.size(), 0.0);
      std::vector<bool> seen(schema.size(), false);
      if (x.contains("features")) {
        const json& f = x["features"];
        if (!f.is_object()) throw Error(ErrorCode::ValidationError, cw + ": features must be an object");
        for (const auto& [key, value] : f.items()) {
          const auto slot = schema.index_of(key);
          if (!slot) throw Error(ErrorCode::ValidationError, cw + ": feature '" + key + "' is not in the schema");
          claim.features[*slot] = finite_number(value, cw + " feature '" + key + "'");
          seen[*slot] = true;
        }
      }
      missing += static_cast<std::size_t>(std::count(seen.begin(), seen.end(), false));
      if (!x.contains("label")) throw Error(ErrorCode::ValidationError, cw + ": missing label");
      const json& l = x["label"];
      if (l.is_boolean()) {
        claim.label = l.get<bool>() ? 1 : 0;
      } else if (l.is_number_integer() && (l.get<long>() == 0 || l.get<long>() == 1)) {
        claim.label = static_cast<int>(l.get<long>());
      } else {
        throw Error(ErrorCode::ValidationError, cw + ": label must be 0 or 1");
      }
      if (x.contains("freq") && !x["freq"].is_null()) {
        const double f = finite_number(x["freq"], cw + " freq");
        if (f < 0.0) throw Error(ErrorCode::ValidationError, cw + ": freq must be non-negative");
        claim.freq = f;
      }
      long cid = static_cast<long>(c);
      if (x.contains("id")) {
        if (!x["id"].is_number_integer()) throw Error(ErrorCode::ValidationError, cw + ": id must be an integer");
        cid = x["id"].get<long>();
        any_id = true;
      } else {
        all_id = false;
      }
      claims.emplace_back(cid, std::move(claim));
    }
    if (any_id) {
      if (!all_id) throw Error(ErrorCode::ValidationError, "either every claim carries an id or none does");
      std::stable_sort(claims.begin(), claims.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (std::size_t c = 0; c < claims.size(); ++c) {
        if (claims[c].first != static_cast<long>(c)) {
          throw Error(ErrorCode::ValidationError, "claim ids must be exactly 0.." + std::to_string(claims.size() - 1));
        }
      }
    }
    std::vector<Edge> edges;
    if (jp.contains("edges")) {
      const json& je = jp["edges"];
      if (!je.is_array()) throw Error(ErrorCode::ValidationError, "edges must be an array");
      for (const json& e : je) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
            e[0].get<long>() < 0 || e[1].get<long>() < 0) {
          throw Error(ErrorCode::ValidationError, "each edge must be [parent, child] with non-negative ids");
        }
        edges.push_back({e[0].get<ClaimId>(), e[1].get<ClaimId>()});
      }
    }
    std::vector<Claim> ordered;
    ordered.reserve(claims.size());
    for (auto& [cid, claim] : claims) ordered.push_back(std::move(claim));
    return AdgProblem(id, std::move(ordered), std::move(edges));
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, where + ": " + e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ValidationError, where + ": " + e.what());
  }
}

}  // namespace

Dataset parse_dataset(std::string_view text) {
  const json doc = parse_json(text, "dataset");
  if (!doc.is_object()) throw Error(ErrorCode::ValidationError, "dataset root must be an object");
  if (!doc.contains("schema") || !doc["schema"].is_array()) {
    throw Error(ErrorCode::ValidationError, "dataset lacks a \"schema\" array");
  }
  std::vector<std::string> names;
  for (const json& n : doc["schema"]) {
    if (!n.is_string()) throw Error(ErrorCode::ValidationError, "schema entries must be strings");
    names.push_back(n.get<std::string>());
  }
  Dataset out;
  try {
    out.schema = FeatureSchema(std::move(names));
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, std::string("schema: ") + e.what());
  }
  if (!doc.contains("problems") || !doc["problems"].is_array()) {
    throw Error(ErrorCode::ValidationError, "dataset lacks a \"problems\" array");
  }
  const json& probs = doc["problems"];
  out.problems.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    out.problems.push_back(parse_problem(probs[i], out.schema, i, out.missing_feature_count));
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "failed reading '" + path.string() + "'");
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_text_file(path)); }

std::string dataset_to_json(const Dataset& dataset) {
  json doc;
  doc["schema"] = dataset.schema.names();
  json probs = json::array();
  for (const auto& p : dataset.problems) {
    json jp;
    jp["id"] = p.id();
    json claims = json::array();
    for (const auto& c : p.claims()) {
      json jc;
      json f = json::object();
      for (std::size_t i = 0; i < dataset.schema.size(); ++i) f[dataset.schema.names()[i]] = c.features[i];
      jc["features"] = std::move(f);
      jc["label"] = c.label;
      if (c.freq) jc["freq"] = *c.freq;
      claims.push_back(std::move(jc));
    }
    jp["claims"] = std::move(claims);
    json edges = json::array();
    for (const auto& e : p.edges()) edges.push_back({e.parent, e.child});
    jp["edges"] = std::move(edges);
    probs.push_back(std::move(jp));
  }
  doc["problems"] = std::move(probs);
  return doc.dump(1) + "\n";
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_text_file(path, dataset_to_json(dataset));
}

void SynthConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (n_problems == 0) bad("n_problems must be positive");
  if (min_claims == 0 || max_claims < min_claims) bad("claim range must satisfy 1 <= min_claims <= max_claims");
  if (!(edge_density >= 0.0) || !std::isfinite(edge_density)) bad("edge_density must be finite and non-negative");
  for (auto [name, rate] : {std::pair{"false_rate", false_rate}, std::pair{"poison_prob", poison_prob}}) {
    if (!(rate >= 0.0 && rate <= 1.0)) bad(std::string(name) + " must lie in [0,1]");
  }
  if (!(freq_auc >= 0.5 && freq_auc < 1.0)) bad("freq_auc must lie in [0.5, 1)");
  if (!std::isfinite(signal_strength) || signal_strength < 0.0) bad("signal_strength must be finite and >= 0");
  if (require_false && false_rate <= 0.0) bad("require_false needs a positive false_rate");
}

FeatureSchema synthetic_schema() {
  std::vector<std::string> names{"frequency-score", "coherent_to_ancestors", "claim_index"};
  for (auto n : structural_feature_names()) names.emplace_back(n);
  return FeatureSchema(std::move(names));
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  double lo = -12.0, hi = 12.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Dataset out;
  out.schema = synthetic_schema();
  const std::size_t n_struct = structural_feature_names().size();
  // Frequencies are 5 * sigmoid(z) with z ~ N(+-shift/2, 1), so their AUC is
  // Phi(shift / sqrt 2).
  const double shift = std::sqrt(2.0) * normal_quantile(cfg.freq_auc);
  out.problems.reserve(cfg.n_problems);
  for (std::size_t i = 0; i < cfg.n_problems; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t n = cfg.min_claims + static_cast<std::size_t>(unif(rng) * static_cast<double>(
                                                                        cfg.max_claims - cfg.min_claims + 1));
    const std::size_t n_claims = std::min(n, cfg.max_claims);
    std::vector<Edge> edges;
    for (std::size_t v = 1; v < n_claims; ++v) {
      const double p = std::min(1.0, cfg.edge_density / static_cast<double>(v));
      for (std::size_t u = 0; u < v; ++u)
        if (unif(rng) < p) edges.push_back({u, v});
    }
    std::vector<std::vector<ClaimId>> parents(n_claims);
    for (const auto& e : edges) parents[e.child].push_back(e.parent);

    std::vector<int> labels(n_claims, 1);
    for (int attempt = 0;; ++attempt) {
      for (std::size_t v = 0; v < n_claims; ++v) {
        bool wrong = unif(rng) < cfg.false_rate;
        const bool bad_parent = std::any_of(parents[v].begin(), parents[v].end(),
                                            [&](ClaimId u) { return labels[u] == 0; });
        if (!wrong && bad_parent) wrong = unif(rng) < cfg.poison_prob;
        labels[v] = wrong ? 0 : 1;
      }
      if (!cfg.require_false || std::count(labels.begin(), labels.end(), 0) > 0) break;
      if (attempt > 10000) {
        // Force one error so the loop terminates for tiny false rates.
        labels[static_cast<std::size_t>(unif(rng) * static_cast<double>(n_claims)) % n_claims] = 0;
        break;
      }
    }

    std::vector<Claim> claims(n_claims);
    for (std::size_t v = 0; v < n_claims; ++v) {
      const double sign = labels[v] == 1 ? 0.5 : -0.5;
      const double z = sign * shift + normal(rng);
      const double freq = 5.0 / (1.0 + std::exp(-z));
      const double signal = sign * cfg.signal_strength + normal(rng);
      claims[v].label = labels[v];
      claims[v].freq = freq;
      claims[v].features.assign(3 + n_struct, 0.0);
      claims[v].features[0] = freq;
      claims[v].features[1] = signal;
      claims[v].features[2] = static_cast<double>(v);
    }
    out.problems.emplace_back("synth-" + std::to_string(i), std::move(claims), std::move(edges));
  }
  refresh_structural_features(out);
  return out;
}

std::size_t refresh_structural_features(Dataset& dataset) {
  const auto& names = structural_feature_names();
  std::vector<std::optional<std::size_t>> slots;
  std::size_t filled = 0;
  for (auto n : names) {
    slots.push_back(dataset.schema.index_of(std::string(n)));
    if (slots.back()) ++filled;
  }
  if (filled == 0) return 0;
  for (auto& p : dataset.problems) {
    const auto feats = compute_structural_features(p);
    for (ClaimId v = 0; v < p.size(); ++v) {
      auto x = p.claims()[v].features;
      const auto vals = feats[v].values();
      for (std::size_t k = 0; k < names.size(); ++k)
        if (slots[k]) x[*slots[k]] = vals[k];
      p.set_features(v, std::move(x));
    }
  }
  return filled;
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j[key].get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidConfig, std::string("field '") + key + "' has the wrong type");
  }
}

void read_soft(const json& j, SoftConfig& s) {
  read_field(j, "T_p", s.T_p);
  read_field(j, "gamma", s.gamma);
  read_field(j, "tau_s", s.tau_s);
  read_field(j, "lambda", s.lambda);
  read_field(j, "beta", s.beta);
  read_field(j, "tau_z", s.tau_z);
  read_field(j, "rho", s.rho);
  read_field(j, "epsilon", s.epsilon);
  read_field(j, "margin_m", s.margin_m);
}

json soft_to_json(const SoftConfig& s) {
  json j;
  j["T_p"] = s.T_p;
  j["gamma"] = s.gamma;
  j["tau_s"] = s.tau_s;
  j["lambda"] = s.lambda;
  j["beta"] = s.beta;
  j["tau_z"] = s.tau_z;
  j["rho"] = s.rho;
  j["epsilon"] = s.epsilon;
  j["margin_m"] = s.margin_m;
  return j;
}

json train_to_json(const TrainConfig& c) {
  json j = soft_to_json(c.soft);
  j["alpha"] = c.alpha;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["cal_fraction"] = c.cal_fraction;
  j["learning_rate"] = c.learning_rate;
  j["seed"] = c.seed;
  j["orientation"] = c.orientation == QuantileOrientation::Lower ? "lower" : "upper";
  j["standardize"] = c.standardize;
  return j;
}

TrainConfig train_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "hyperparameters must be an object");
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw Error(ErrorCode::InvalidConfig, "preset must be a string");
    c.soft = SoftConfig::preset(j["preset"].get<std::string>());
  }
  read_soft(j, c.soft);
  read_field(j, "alpha", c.alpha);
  read_field(j, "epochs", c.epochs);
  read_field(j, "patience", c.patience);
  read_field(j, "cal_fraction", c.cal_fraction);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "seed", c.seed);
  read_field(j, "standardize", c.standardize);
  if (j.contains("orientation")) {
    std::string o;
    read_field(j, "orientation", o);
    if (o == "lower") {
      c.orientation = QuantileOrientation::Lower;
    } else if (o == "upper") {
      c.orientation = QuantileOrientation::Upper;
    } else {
      throw Error(ErrorCode::InvalidConfig, "orientation must be \"lower\" or \"upper\"");
    }
  }
  c.validate();
  return c;
}

}  // namespace

SynthConfig parse_synth_config(std::string_view text) {
  const json j = parse_json(text, "synth config");
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "synth config must be an object");
  SynthConfig c;
  read_field(j, "n_problems", c.n_problems);
  read_field(j, "min_claims", c.min_claims);
  read_field(j, "max_claims", c.max_claims);
  read_field(j, "edge_density", c.edge_density);
  read_field(j, "false_rate", c.false_rate);
  read_field(j, "poison_prob", c.poison_prob);
  read_field(j, "freq_auc", c.freq_auc);
  read_field(j, "signal_strength", c.signal_strength);
  read_field(j, "require_false", c.require_false);
  read_field(j, "seed", c.seed);
  c.validate();
  return c;
}

TrainConfig parse_hyperparameters(std::string_view text, TrainConfig base) {
  return train_from_json(parse_json(text, "hyperparameters"), std::move(base));
}

std::string hyperparameters_to_json(const TrainConfig& cfg) { return train_to_json(cfg).dump(2) + "\n"; }

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["schema"] = ckpt.schema.names();
  j["weights"] = ckpt.scorer.weights;
  j["bias"] = ckpt.scorer.bias;
  j["C"] = ckpt.scorer.risk_offset_C;
  j["config"] = train_to_json(ckpt.config);
  j["seed"] = ckpt.config.seed;
  return j.dump(2) + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  const json j = parse_json(text, "checkpoint");
  Checkpoint c;
  try {
    c.schema = FeatureSchema(j.at("schema").get<std::vector<std::string>>());
    c.scorer.weights = j.at("weights").get<std::vector<double>>();
    c.scorer.bias = j.at("bias").get<double>();
    c.scorer.risk_offset_C = j.value("C", 0.0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ValidationError, std::string("checkpoint: ") + e.what());
  }
  if (c.scorer.weights.size() != c.schema.size()) {
    throw Error(ErrorCode::SchemaMismatch, "checkpoint has " + std::to_string(c.scorer.weights.size()) +
                                               " weights for " + std::to_string(c.schema.size()) + " features");
  }
  if (j.contains("config")) c.config = train_from_json(j["config"], {});
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_text_file(path)); }

namespace {

std::string fmt(const char* pattern, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, x);
  // Avoid a "-0.00" that would differ from an otherwise equal "0.00".
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
  return s;
}

std::string target_status(const MethodRow& r) {
  if (r.meets_target) return "yes";
  return r.near_miss ? "near" : "no";
}

}  // namespace

std::string report_to_csv(const EvalReport& report) {
  std::string out = "method,alpha,fold,coverage_pct,retention_mean,retention_fraction_pct,meets_target\n";
  for (const auto& r : report.rows) {
    out += std::string(method_name(r.method)) + "," + fmt("%g", r.alpha) + "," +
           (r.fold ? std::to_string(*r.fold) : std::string("all")) + "," + fmt("%.2f", 100.0 * r.coverage) + "," +
           fmt("%.2f", r.retention_mean) + "," + fmt("%.2f", 100.0 * r.retention_fraction) + "," +
           target_status(r) + "\n";
  }
  return out;
}

std::string report_summary(const EvalReport& report) {
  std::vector<const MethodRow*> agg;
  for (const auto& r : report.rows)
    if (!r.fold) agg.push_back(&r);
  std::ostringstream os;
  os << "alpha  target  method               coverage%  retention  retention%  delta%    meets\n";
  std::map<double, std::vector<const MethodRow*>> by_alpha;
  for (const auto* r : agg) by_alpha[r->alpha].push_back(r);
  for (const auto& [alpha, rows] : by_alpha) {
    const MethodRow* base = rows.front();
    for (const auto* r : rows)
      if (r->method == Method::Cf) base = r;
    for (const auto* r : rows) {
      std::string delta = "-";
      if (r != base && base->retention_mean > 0.0) {
        delta = fmt("%+.1f", 100.0 * (r->retention_mean - base->retention_mean) / base->retention_mean);
      }
      char line[256];
      std::snprintf(line, sizeof line, "%-6s %-7s %-20s %-10s %-10s %-11s %-9s %s\n", fmt("%.2f", alpha).c_str(),
                    fmt("%.2f", 100.0 * (1.0 - alpha)).c_str(), std::string(method_name(r->method)).c_str(),
                    fmt("%.2f", 100.0 * r->coverage).c_str(), fmt("%.2f", r->retention_mean).c_str(),
                    fmt("%.2f", 100.0 * r->retention_fraction).c_str(), delta.c_str(), target_status(*r).c_str());
      os << line;
    }
  }
  for (const auto& [alpha, c] : report.dcf_selected) {
    os << fmt("dcf config at alpha %.2f:", alpha) << fmt(" gamma=%g", c.gamma) << fmt(" lambda=%g", c.lambda)
       << fmt(" tau_s=%g", c.tau_s) << fmt(" T_p=%g", c.T_p) << fmt(" tau_z=%g", c.tau_z) << "\n";
  }
  return os.str();
}

std::string agreement_to_csv(const std::vector<AgreementRow>& rows) {
  std::string out = "alpha,both_incl,soft_only,hard_only,both_excl,agree_pct\n";
  for (const auto& r : rows) {
    out += fmt("%g", r.alpha) + "," + std::to_string(r.both_incl) + "," + std::to_string(r.soft_only) + "," +
           std::to_string(r.hard_only) + "," + std::to_string(r.both_excl) + "," + fmt("%.2f", r.agree_pct()) + "\n";
  }
  return out;
}

std::string correlation_to_csv(const CalibrationCorrelation& corr) {
  std::string out = "kind,n,pearson_r,mae\n";
  out += "score," + std::to_string(corr.scores.n) + "," + fmt("%.6f", corr.scores.pearson_r) + "," +
         fmt("%.6f", corr.scores.mae) + "\n";
  if (corr.thresholds) {
    out += "threshold," + std::to_string(corr.thresholds->n) + "," + fmt("%.6f", corr.thresholds->pearson_r) + "," +
           fmt("%.6f", corr.thresholds->mae) + "\n";
  }
  return out;
}

void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  write_text_file(path, format == ReportFormat::Csv ? report_to_csv(report) : report_summary(report));
}

}  // namespace cohconf
