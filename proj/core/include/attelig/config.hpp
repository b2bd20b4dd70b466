#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "attelig/data.hpp"
#include "attelig/dgp.hpp"
#include "attelig/estimators.hpp"
#include "attelig/nuisance.hpp"
#include "attelig/simulation.hpp"

namespace attelig::config {

/// Reads and parses a JSON config file. Throws IoError or InvalidConfig.
nlohmann::json load_json(const std::filesystem::path& path);

CovariateSchema parse_schema(const nlohmann::json& j);
EligibilityRule parse_rule(const nlohmann::json& j);

/// "glm" resolves to logistic or OLS according to `task`. Accepts a bare
/// kind string or {"kind", "params", "members"}.
learners::LearnerSpec parse_learner(const nlohmann::json& j, learners::TaskKind task);

/// {"mu0_strategy", "restrict_mu_u_to_eligible", "clip": [lo, hi],
///  "ridge_fallback", "single_class_fallback", "models": {name: model}}.
NuisanceSpec parse_nuisance_spec(const nlohmann::json& j);

std::set<EstimatorKind> parse_estimators(const nlohmann::json& j);

/// Default coefficients overlaid with any keys present in `j`.
dgp::DgpConfig parse_dgp(const nlohmann::json& j);

/// True when two configs describe the same law (n and seed are ignored).
bool same_law(const dgp::DgpConfig& a, const dgp::DgpConfig& b);

struct OutputOptions {
  std::filesystem::path dir = "attelig_out";
  bool table = true;
};

struct EstimateRun {
  CovariateSchema schema;
  EligibilityRule rule = EligibilityRule::threshold("a", Comparator::GreaterEqual, 0.0);
  std::filesystem::path csv;
  EstimationConfig estimation;
  OutputOptions output;
};

struct SimulateRun {
  sim::SimulationConfig simulation;
  OutputOptions output;
};

/// Relative paths resolve against `baseDir` (the config file's directory).
EstimateRun parse_estimate_run(const nlohmann::json& j, const std::filesystem::path& baseDir);
SimulateRun parse_simulate_run(const nlohmann::json& j, const std::filesystem::path& baseDir);

}  // namespace attelig::config
