#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "attelig/data.hpp"
#include "attelig/nuisance.hpp"

namespace attelig {

enum class EstimatorKind { CC, IWOR, IF, EIF };

std::string_view to_string(EstimatorKind k) noexcept;
EstimatorKind parse_estimator_kind(std::string_view s);

/// Nuisance values for one observation. Values that an observation does not
/// need (u, mu0 when r = 0) may be NaN; they are never read in that case.
struct ObsNuisance {
  double eta1 = 1.0, eta0 = 1.0, u = 0.5, mu0 = 0.0, eps1 = 1.0, xi = 0.0, gamma = 0.0, chi = 0.0, nu = 0.0,
         omega1 = 1.0;
};

/// Observation summary used by the contribution formulas; e is ignored when r = 0.
struct ObsCore {
  int a = 0;
  int r = 0;
  int e = 0;
  double y = 0.0;
};

double alpha_dot(const ObsCore& o, const ObsNuisance& n);
double beta_dot(const ObsCore& o, const ObsNuisance& n);
double alpha_prime_dot(const ObsCore& o, const ObsNuisance& n);
double beta_prime_dot(const ObsCore& o, const ObsNuisance& n);

struct InfluenceContributions {
  Eigen::VectorXd alphaDot, betaDot, alphaPrimeDot, betaPrimeDot;
};

ObsNuisance nuisance_at(const NuisanceSet& set, std::size_t i);
ObsCore core_at(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig, std::size_t i);

/// EIF contributions when the EIF nuisances were fitted, IF contributions when
/// the IF nuisances were fitted; the others are left empty.
InfluenceContributions contributions(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                                     const NuisanceSet& nuis);

struct EstimateReport {
  EstimatorKind estimator = EstimatorKind::EIF;
  double thetaHat = 0.0;
  std::optional<double> se;
  std::optional<double> ciLo, ciHi;
  double level = 0.95;
  std::size_t n = 0;
  std::size_t nComplete = 0;
  std::size_t nTreatedEligibleComplete = 0;
  nlohmann::json method = nlohmann::json::object();
  nlohmann::json configEcho = nlohmann::json::object();

  nlohmann::json to_json() const;
};

struct RatioEstimate {
  double alphaHat = 0.0;
  double betaHat = 0.0;
  double thetaHat = 0.0;
  double se = 0.0;
  Eigen::VectorXd thetaStar;  // centered influence values
};

/// theta = mean(beta)/mean(alpha) with influence-function standard error.
RatioEstimate ratio_estimate(const Eigen::VectorXd& alphaDot, const Eigen::VectorXd& betaDot);

/// Wald interval theta +/- z * se.
std::pair<double, double> wald_interval(double theta, double se, double level);

struct IfEstimate {
  EstimateReport report;
  RatioEstimate ratio;
};

IfEstimate theta_eif(const CoarsenedDataset& data, const EligibilityRule& rule, const NuisanceSet& nuis,
                     double level = 0.95);
IfEstimate theta_if(const CoarsenedDataset& data, const EligibilityRule& rule, const NuisanceSet& nuis,
                    double level = 0.95);

/// Mean of y - mu0Hat over complete, treated, eligible records (SE left empty).
EstimateReport theta_cc(const CoarsenedDataset& data, const EligibilityRule& rule, const Eigen::VectorXd& mu0Hat,
                        double level = 0.95);
/// Ratio of ARE / eta1Hat weighted residual sums (SE left empty).
EstimateReport theta_iwor(const CoarsenedDataset& data, const EligibilityRule& rule, const Eigen::VectorXd& mu0Hat,
                          const Eigen::VectorXd& eta1Hat, double level = 0.95);

struct BootstrapResult {
  double se = 0.0;
  double ciLo = 0.0;
  double ciHi = 0.0;
  int replicates = 0;
  int skipped = 0;
};

/// Nonparametric bootstrap of `estimator` (which refits whatever it needs on
/// the resample). Resamples whose estimator throws are skipped; more than
/// 10% skipped raises ResampleDegenerate.
BootstrapResult bootstrap_se(const std::function<double(const CoarsenedDataset&)>& estimator,
                             const CoarsenedDataset& data, int B, std::uint64_t seed, double level,
                             double thetaHat);

/// Everything needed to run a suite of estimators on one dataset.
struct EstimationConfig {
  std::set<EstimatorKind> suite = {EstimatorKind::CC, EstimatorKind::IWOR, EstimatorKind::IF, EstimatorKind::EIF};
  /// Cross-fitted nuisances for IF/EIF.
  NuisanceSpec crossfitSpec;
  /// Full-sample models (mu0, eta) for CC/IWOR.
  NuisanceSpec parametricSpec;
  int folds = 2;
  std::uint64_t seed = 1;
  double level = 0.95;
  /// 0 disables bootstrap SEs for CC/IWOR.
  int bootstrapB = 200;
  nlohmann::json configEcho = nlohmann::json::object();
};

std::vector<EstimateReport> run_estimators(const CoarsenedDataset& data, const EligibilityRule& rule,
                                           const EstimationConfig& config);

}  // namespace attelig
