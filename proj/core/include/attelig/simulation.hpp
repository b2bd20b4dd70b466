#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attelig/dgp.hpp"
#include "attelig/estimators.hpp"

namespace attelig::sim {

/// One row group of the results table: a labelled estimator suite with its own nuisance setup.
struct Variant {
  std::string label;
  EstimationConfig estimation;
};

struct SimulationConfig {
  dgp::DgpConfig dgp;
  int nReps = 200;
  std::vector<Variant> variants;
  /// Reference ATTE; computed with true_theta(oracleN) when absent.
  std::optional<double> thetaTrue;
  std::size_t oracleN = dgp::kPinnedOracleN;
  /// Worker threads; 0 = hardware concurrency. ATTELIG_THREADS takes precedence.
  int threads = 0;
  nlohmann::json configEcho = nlohmann::json::object();
};

struct EstimatorSummary {
  std::string label;
  EstimatorKind estimator = EstimatorKind::EIF;
  int nOk = 0;
  int nFailed = 0;
  double meanEstimate = 0.0;
  double percentBias = 0.0;
  std::optional<double> sd;        // undefined for a single replication
  std::optional<double> coverage;  // only when every replication produced an interval
  std::optional<double> meanSe;
};

struct ReplicationFailure {
  int replication = 0;
  std::string variant;
  std::string message;
};

struct SimulationSummary {
  double thetaTrue = 0.0;
  std::size_t oracleN = 0;
  bool thetaPinned = false;
  int nReps = 0;
  std::size_t n = 0;
  std::vector<EstimatorSummary> rows;
  std::vector<ReplicationFailure> failures;
  /// Per-replication estimates, rows[k] aligned with `rows`.
  std::vector<std::vector<double>> estimates;
  nlohmann::json configEcho = nlohmann::json::object();

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Resolve the worker count: ATTELIG_THREADS, else the explicit value, else hardware concurrency.
int resolve_threads(int requested);

/// Replication r simulates with seed derive_seed(dgp.seed, 2r) and estimates
/// with derive_seed(dgp.seed, 2r + 1). Results are reduced in replication
/// order, so the summary does not depend on the thread count. Throws when
/// more than 2% of replications fail.
SimulationSummary run_simulation(const SimulationConfig& config);

/// Variants used for the desk-scale results table: CC with the true outcome
/// model, IWOR with both models true, IWOR with an intercept-only eta, and
/// IF/EIF with cross-fitted stacks.
std::vector<Variant> default_variants(int folds = 2, int bootstrapB = 0);

/// The correctly specified outcome-model and missingness-model nuisance specs.
NuisanceModelSpec true_mu_spec();
NuisanceModelSpec true_eta_spec();
/// Stack of {GLM, forest} used for every cross-fitted nuisance.
NuisanceSpec stack_nuisance_spec();

}  // namespace attelig::sim
