#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attelig/data.hpp"
#include "attelig/estimators.hpp"

namespace attelig::oracle {

/// One support point of the full (unmasked) law over (L*, A, R, L^e_m, Y).
struct Atom {
  std::vector<double> lStar;
  int a = 0;
  int r = 0;
  double lElig = 0.0;
  double y = 0.0;
  double prob = 0.0;
};

/// Finite-support joint law. L* columns are named l1..ld, the single
/// eligibility covariate is l_elig.
class DiscreteJointDistribution {
 public:
  DiscreteJointDistribution() = default;
  /// Throws InvalidDistribution on non-positive probabilities, a total
  /// differing from 1 by more than 1e-12, ragged L*, or duplicate atoms.
  DiscreteJointDistribution(std::vector<Atom> atoms, double epsilon = 0.0, std::string name = {});

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  std::size_t lstar_dim() const noexcept { return dim_; }
  /// Declared positivity margin.
  double epsilon() const noexcept { return epsilon_; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::vector<Atom> atoms_;
  std::size_t dim_ = 0;
  double epsilon_ = 0.0;
  std::string name_;
};

CovariateSchema oracle_schema(std::size_t lstarDim);
/// l_elig >= 5.
EligibilityRule default_oracle_rule();

/// Fixture D1: binary L*, l_elig in {4, 6}, y in {0, 1, 2}; every conditional
/// table entry lies in [0.1, 0.9].
DiscreteJointDistribution make_d1();
/// D1 with p(r | l*, a, l_elig) depending on l_elig.
DiscreteJointDistribution make_d1_mar_violating();

struct RandomOptions {
  int lstarLevels = 2;
  std::vector<double> eligValues = {4.0, 5.0, 6.0};
  std::vector<double> yValues = {0.0, 1.0, 2.0};
  /// Probability tables are mixed with the uniform table by this weight.
  double floor = 0.2;
  /// Nonzero makes p(r = 1 | l*, a, l_elig) vary with l_elig (MAR violation).
  double marViolation = 0.0;
};

/// Independent draws of p(l*), p(a|l*), p(r|l*,a), p(l_elig|l*,a) and
/// p(y|l*,l_elig,a); MAR holds by construction when marViolation = 0.
DiscreteJointDistribution random_mar_distribution(std::uint64_t seed, const RandomOptions& options = {});

/// Exact E[mu_1 - mu_0 | A = 1, E = 1] from the structural (full-data) law.
double enumerate_true_atte(const DiscreteJointDistribution& dist, const EligibilityRule& rule);

struct Functional {
  double alpha = 0.0;
  double beta = 0.0;
  double theta = 0.0;
};

/// beta(P)/alpha(P) evaluated from the coarsened law only.
Functional enumerate_identification_functional(const DiscreteJointDistribution& dist, const EligibilityRule& rule);

struct InfluenceMeans {
  double alpha = 0.0;
  double beta = 0.0;
};

/// E_P of the centered efficient influence functions with true nuisances.
InfluenceMeans enumerate_eif_means(const DiscreteJointDistribution& dist, const EligibilityRule& rule);
/// Same for the non-efficient (IF) pair that uses nu and omega_1.
InfluenceMeans enumerate_if_means(const DiscreteJointDistribution& dist, const EligibilityRule& rule);

/// Max |lambda_1/lambda_0 - u/(1-u) (1-pi) eta_0 / (pi eta_1)| over complete-case (l*, l_elig) cells.
double check_density_ratio_identity(const DiscreteJointDistribution& dist, const EligibilityRule& rule);

/// Max |E[X | B, C=1] P(C=1 | B) - E[XC | B]| with B = (L*, A), C = R and X in {E, EY}.
double check_total_expectation(const DiscreteJointDistribution& dist, const EligibilityRule& rule);

/// Max over (l*, a) and (y, l_elig) of |p(y, l_elig | l*, a, r=1) - p(y, l_elig | l*, a, r=0)|.
double mar_certificate_discrepancy(const DiscreteJointDistribution& dist);

/// Smallest of eta(l*, a), P(A=1 | l*, l_elig, E=1) and 1 - P(A=1 | l*, l_elig, E=1).
double positivity_margin(const DiscreteJointDistribution& dist, const EligibilityRule& rule);

enum class Perturbable { Eta1, Eta0, U, Mu0, Eps1, Xi, Gamma, Chi };
std::string_view to_string(Perturbable p) noexcept;
Perturbable parse_perturbable(std::string_view s);

/// Multiplicative factors applied to the true nuisances; probabilities are
/// re-clipped to [clipLo, clipHi].
struct Perturbation {
  std::map<Perturbable, double> factors;
  double clipLo = 0.005;
  double clipHi = 0.995;
};

struct Remainder {
  /// Closed-form second-order remainders.
  double rAlpha = 0.0;
  double rBeta = 0.0;
  /// alpha(Pbar) - alpha(P) + E_P[centered alpha-dot at Pbar]; alpha(Pbar)
  /// cancels, leaving E_P[alpha-dot at Pbar] - alpha(P).
  double residualAlpha = 0.0;
  double residualBeta = 0.0;
};

Remainder check_remainder_structure(const DiscreteJointDistribution& dist, const EligibilityRule& rule,
                                    const Perturbation& perturbation);

/// Exact per-observation nuisance values; fields a record does not need are 0.
ObsNuisance true_nuisance(const DiscreteJointDistribution& dist, const EligibilityRule& rule,
                          const std::vector<double>& lStar, int a, int r, std::optional<double> lElig, double y);

/// n i.i.d. draws with l_elig masked when r = 0.
CoarsenedDataset sample(const DiscreteJointDistribution& dist, std::size_t n, std::uint64_t seed);

/// NuisanceSet holding the enumerated truth for every record of `data`.
NuisanceSet true_nuisance_set(const DiscreteJointDistribution& dist, const EligibilityRule& rule,
                              const CoarsenedDataset& data);

struct IdentityCheck {
  std::string identity;
  double discrepancy = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Every identity the oracle verifies, for one distribution.
std::vector<IdentityCheck> run_identity_checks(const DiscreteJointDistribution& dist, const EligibilityRule& rule);

// ---------------------------------------------------------------------------
// Fixture files

struct Fixture {
  DiscreteJointDistribution dist;
  EligibilityRule rule = default_oracle_rule();
};

/// Text format:
///   name <string>
///   lstar_dim <d>
///   epsilon <value>
///   rule <covariate> <op> <cutoff>
///   atoms
///   <l1> .. <ld> <a> <r> <l_elig> <y> <prob>
/// Blank lines and '#' comments are ignored. Throws ParseError or InvalidDistribution.
Fixture parse_fixture(std::string_view text);
Fixture load_fixture(const std::filesystem::path& path);
std::string format_fixture(const Fixture& fixture);

}  // namespace attelig::oracle
