#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cohconf/adg.hpp"
#include "cohconf/dcf.hpp"
#include "cohconf/evaluation.hpp"
#include "cohconf/hard_cf.hpp"
#include "cohconf/training.hpp"

namespace cohconf {

/// Schema plus problems. Feature vectors follow the schema order.
struct Dataset {
  FeatureSchema schema;
  std::vector<AdgProblem> problems;
  /// Claim features absent from the file, filled with 0.0 at load time.
  std::size_t missing_feature_count = 0;

  bool operator==(const Dataset& o) const { return schema == o.schema && problems == o.problems; }
};

/// Parses the dataset document:
///   {"schema": [names...],
///    "problems": [{"id": str, "claims": [{"features": {name: value}, "label": 0|1,
///                                         "freq": number (optional), "id": int (optional)}],
///                  "edges": [[parent, child], ...]}]}
/// Claims carrying an "id" are reordered by it; ids must then be 0..n-1.
/// Throws ParseError (with line and column), ValidationError (naming the problem).
Dataset parse_dataset(std::string_view text);
Dataset load_dataset(const std::filesystem::path& path);
std::string dataset_to_json(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

struct SynthConfig {
  std::size_t n_problems = 500;
  std::size_t min_claims = 5;
  std::size_t max_claims = 12;
  /// Expected number of parents per non-root claim.
  double edge_density = 1.0;
  /// Chance that a claim is wrong on its own.
  double false_rate = 0.05;
  /// Chance that a claim with a false parent becomes false too.
  double poison_prob = 0.6;
  /// Target AUC of the frequency signal against the labels, in [0.5, 1).
  double freq_auc = 0.6;
  /// Mean gap, in standard deviations, of the structural signal feature
  /// between true and false claims.
  double signal_strength = 2.0;
  /// Resample labels until every problem has at least one false claim.
  bool require_false = false;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Schema of generated datasets: "frequency-score", "coherent_to_ancestors",
/// "claim_index", then the structural graph features.
FeatureSchema synthetic_schema();

/// Random DAGs with propagated errors, a frequency feature calibrated to the
/// target AUC and one label-correlated signal feature. Deterministic per seed.
Dataset generate_synthetic(const SynthConfig& cfg);

/// Parses a SynthConfig document; absent keys keep their defaults.
/// Throws ParseError, InvalidConfig.
SynthConfig parse_synth_config(std::string_view text);

/// Hyperparameter document: optional "preset" naming a soft preset, any
/// SoftConfig field, and the TrainConfig fields alpha, epochs, patience,
/// cal_fraction, learning_rate, seed, orientation ("lower"|"upper").
/// Throws ParseError, InvalidConfig.
TrainConfig parse_hyperparameters(std::string_view text, TrainConfig base = {});
std::string hyperparameters_to_json(const TrainConfig& cfg);

/// Recomputes the structural graph features of every problem into the
/// matching nx_* schema columns, leaving other columns untouched. Returns
/// how many schema columns were filled.
std::size_t refresh_structural_features(Dataset& dataset);

struct Checkpoint {
  FeatureSchema schema;
  ScorerParams scorer;
  TrainConfig config;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

enum class ReportFormat { Csv, Summary };

/// CSV: header "method,alpha,fold,coverage_pct,retention_mean,retention_fraction_pct,meets_target"
/// and one line per row; the fold column is "all" for aggregates.
std::string report_to_csv(const EvalReport& report);
/// Aggregate rows laid out per alpha: coverage, retention, change against the
/// first method present, and target status.
std::string report_summary(const EvalReport& report);
std::string agreement_to_csv(const std::vector<AgreementRow>& rows);
std::string correlation_to_csv(const CalibrationCorrelation& corr);

/// Throws IoError.
void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cohconf
