#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "attelig/data.hpp"

namespace attelig::dgp {

struct TruncatedNormal {
  double mean = 0.0;
  double sd = 1.0;
  double lo = -1.0;
  double hi = 1.0;
};

/// Independent parametric marginals for the fully observed covariates.
struct LStarConfig {
  std::vector<double> site = {0.21, 0.17, 0.62};               // WA, NC, SC
  double gender = 0.81;
  double race = 0.50;
  std::vector<double> smoking = {0.025, 0.44, 0.51, 0.025};   // current, former, never, no_self_report
  TruncatedNormal baselineBmi = {45.0, 7.0, 30.0, 80.0};
  TruncatedNormal baselineAge = {43.7, 11.0, 19.0, 79.0};
  TruncatedNormal eGFR = {109.0, 20.0, 15.0, 180.0};

  void validate() const;
};

/// Named coefficients. Term syntax: "(Intercept)", a numeric covariate name,
/// "cov[level]" for a categorical level indicator, "I(cov^2)", "bs_type" for
/// the treatment, and ':'-joined products of these.
using Coefficients = std::vector<std::pair<std::string, double>>;

struct DgpConfig {
  Coefficients betaPi, betaEta, betaLambda, betaMu;
  double alphaLambda = 4.83;
  double sigmaY2 = 1e-2;
  double eligThreshold = 5.7;
  std::size_t n = 5000;
  std::uint64_t seed = 1;
  LStarConfig lStar;

  /// The reference coefficient tables with the default covariate marginals.
  static DgpConfig published();
  void validate() const;
};

/// Reference value of the ATTE for DgpConfig::published(), computed by
/// true_theta with oracleN = 1e7 and kThetaTrueSeed.
inline constexpr double kPinnedThetaTrue = -0.032475486986728835;
inline constexpr std::size_t kPinnedOracleN = 10'000'000;
inline constexpr std::uint64_t kThetaTrueSeed = 20240101;

/// Schema of simulated data: L* = (site, gender, race, baseline_bmi,
/// smoking_status, baseline_age, eGFR), L^e_m = (baseline_a1c).
CovariateSchema simulation_schema();
EligibilityRule simulation_rule(double threshold = 5.7);

/// A linear predictor compiled against the simulation schema.
class LinearPredictor {
 public:
  LinearPredictor() = default;
  LinearPredictor(const Coefficients& coefficients, const CovariateSchema& schema);

  /// lStar in schema order (categoricals as level indices).
  double operator()(const std::vector<double>& lStar, int a, double a1c) const;

  bool uses_treatment() const noexcept { return usesTreatment_; }
  bool uses_elig() const noexcept { return usesElig_; }

 private:
  struct Factor {
    enum class Kind { Intercept, Treatment, Value, Square, Level } kind = Kind::Intercept;
    bool elig = false;
    std::size_t position = 0;
    std::size_t level = 0;
  };
  struct Term {
    double coefficient = 0.0;
    std::vector<Factor> factors;
  };
  std::vector<Term> terms_;
  bool usesTreatment_ = false;
  bool usesElig_ = false;
};

/// Simulated coarsened dataset; L^e_m is generated for everyone and masked when r = 0.
CoarsenedDataset simulate_dataset(const DgpConfig& config);

/// One unmasked draw, exposed for tests of the generative law.
struct FullRecord {
  std::vector<double> lStar;
  int a = 0;
  int r = 0;
  double a1c = 0.0;
  double y = 0.0;
};
std::vector<FullRecord> simulate_full(const DgpConfig& config);

struct ThetaTrue {
  double value = 0.0;
  double mcse = 0.0;
  std::size_t oracleN = 0;  // draws actually used
};

/// Monte Carlo ATTE over the unmasked law: mean of mu_1 - mu_0 over draws
/// with A = 1 and E = 1. oracleN is doubled until the Monte Carlo SE is at
/// most maxMcse.
ThetaTrue true_theta(const DgpConfig& config, std::size_t oracleN, std::uint64_t seed = kThetaTrueSeed,
                     double maxMcse = 1e-4);

}  // namespace attelig::dgp
