#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "privmarket/ingest.hpp"
#include "privmarket/mechanism.hpp"
#include "privmarket/oracle.hpp"

namespace privmarket {

/// Declarative oracle description, loadable from the experiment config.
struct OracleSpec {
  OracleKind kind = OracleKind::Additive;
  std::map<UserId, double> weights;
  double base = 0.0;
  double rho = 1.0;
  // classifier settings
  double test_fraction = 0.3;
  std::uint64_t split_seed = 0;
  ClassifierParams params;

  friend bool operator==(const OracleSpec&, const OracleSpec&) = default;
};

OracleSpec oracle_spec_from_json(const nlohmann::json& j);
nlohmann::json oracle_spec_to_json(const OracleSpec& spec);

/// Market plus oracle assembled for one experiment: for the classifier
/// kind the dataset is split once, the oracle holds the clean test side
/// and submissions carry the anonymized train side; synthetic kinds take
/// their users from the weights (data optional).
struct Experiment {
  MarketState market;
  AccuracyOracle oracle;
  std::map<UserId, Dataset> true_data;  // pre-noise per-user train data
  std::vector<std::string> warnings;
};

Experiment prepare_experiment(const OracleSpec& spec,
                              const std::optional<Dataset>& data,
                              const std::map<UserId, double>& privacy,
                              std::uint64_t noise_seed);

/// Re-anonymizes one user's true data at a new level (same noise stream)
/// and returns the updated market.
MarketState with_privacy_level(const Experiment& exp, UserId user, double p);

// ---------------------------------------------------------------------------
// Standalone accuracies (per-user f({n}) with contributed record counts).

struct StandaloneEntry {
  UserId user = 0;
  double accuracy = 0.0;
  std::size_t records = 0;

  friend bool operator==(const StandaloneEntry&,
                         const StandaloneEntry&) = default;
};

std::vector<StandaloneEntry> standalone_accuracy(const MarketState& market,
                                                 const AccuracyOracle& oracle);

// ---------------------------------------------------------------------------
// Privacy sweeps: vary one user's anonymization level over a grid while
// everyone else stays fixed; track accuracy, payoff and the level where the
// payoff turns negative.

struct SweepGrid {
  UserId user = 0;
  std::vector<double> grid;  // non-empty, >= 0, strictly increasing

  friend bool operator==(const SweepGrid&, const SweepGrid&) = default;
};

struct SweepConfig {
  OracleSpec oracle;
  std::map<UserId, double> fixed_privacy;
  std::vector<SweepGrid> varying;
  std::uint64_t seed = 0;
  std::optional<double> epsilon;  // default: oracle tolerance
  bool refine = true;             // bisection refinement, synthetic only
  std::string dataset_path;       // CLI convenience
  std::string out_csv;
  std::string out_json;
};

SweepConfig sweep_config_from_json(const nlohmann::json& j);
nlohmann::json sweep_config_to_json(const SweepConfig& cfg);

struct SweepRow {
  UserId user = 0;
  double p = 0.0;
  double f_full = 0.0;
  double payoff = 0.0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct UserSweepSummary {
  std::optional<double> critical_point;      // first grid p with F < -eps
  std::optional<double> over_anonymization;  // first grid p with F < 0
  std::optional<double> refined_critical;    // bisected crossing (synthetic)

  friend bool operator==(const UserSweepSummary&,
                         const UserSweepSummary&) = default;
};

struct SweepResult {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::vector<SweepRow> rows;
  std::map<UserId, UserSweepSummary> summary;

  friend bool operator==(const SweepResult&, const SweepResult&) = default;
};

SweepResult privacy_sweep(const SweepConfig& cfg,
                          const std::optional<Dataset>& data);

// ---------------------------------------------------------------------------
// Coalition experiment: Eq. 2 payoff, Shapley split, and the comparison
// against each member's standalone payoff.

struct ShapleySettings {
  std::size_t exact_limit = 10;
  std::uint64_t permutations = 20000;
  std::uint64_t seed = 0;
};

struct CoalitionMemberRow {
  UserId user = 0;
  double shapley_value = 0.0;
  double standalone_payoff = 0.0;
  double standard_error = 0.0;  // Monte Carlo only

  friend bool operator==(const CoalitionMemberRow&,
                         const CoalitionMemberRow&) = default;
};

struct CoalitionReport {
  CoalitionId id = 0;
  std::vector<UserId> members;
  int k_anonymity = 0;
  double payoff = 0.0;  // F_K
  ShapleyResult shapley;
  std::vector<CoalitionMemberRow> table;
};

CoalitionReport coalition_experiment(const MarketState& market,
                                     const AccuracyOracle& oracle,
                                     CoalitionId id, ShapleyMethod method,
                                     const ShapleySettings& settings = {});

// ---------------------------------------------------------------------------
// Report emission. Every JSON report carries a "type" tag; CSV columns are
// stable and documented in the README.

nlohmann::json to_json(const PayoffReport& report);
PayoffReport payoff_report_from_json(const nlohmann::json& j);
void write_csv(const PayoffReport& report, std::ostream& out);

nlohmann::json to_json(const SweepResult& result, const SweepConfig& cfg);
SweepResult sweep_result_from_json(const nlohmann::json& j);
void write_csv(const SweepResult& result, std::ostream& out);

nlohmann::json to_json(const std::vector<StandaloneEntry>& rows);
void write_csv(const std::vector<StandaloneEntry>& rows, std::ostream& out);

nlohmann::json to_json(const CoalitionReport& report);
void write_csv(const CoalitionReport& report, std::ostream& out);

nlohmann::json to_json(const FilterResult& result);
void write_csv(const FilterResult& result, std::ostream& out);

/// Renders any tagged report JSON back to its CSV form (`report` command).
std::string report_json_to_csv(const nlohmann::json& j);

/// Writes text to a file, IoError carries the path on failure.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace privmarket
