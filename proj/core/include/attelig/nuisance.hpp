#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "attelig/data.hpp"
#include "attelig/design.hpp"
#include "attelig/learners.hpp"

namespace attelig {

enum class NuisanceName { Eta, U, Mu0, Eps1, Xi, Gamma, Chi, Nu, Omega1 };

std::string_view to_string(NuisanceName name) noexcept;
NuisanceName parse_nuisance_name(std::string_view name);
learners::TaskKind task_of(NuisanceName name) noexcept;

enum class Mu0Strategy { SingleModel, Stratify, FullInteractions };

std::string_view to_string(Mu0Strategy s) noexcept;
Mu0Strategy parse_mu0_strategy(std::string_view s);

/// Learner plus the feature set it sees. The conditioning variables fixed by
/// the nuisance's definition (A for eta and mu, L^e_m for u and mu, Y for
/// eps1/xi/gamma/chi) are always added unless interceptOnly is set.
struct NuisanceModelSpec {
  learners::LearnerSpec learner;
  std::optional<std::vector<std::string>> covariates;  // L* subset; nullopt = all
  std::vector<std::pair<std::string, std::string>> interactions;
  bool interceptOnly = false;
};

struct NuisanceSpec {
  std::map<NuisanceName, NuisanceModelSpec> models;
  Mu0Strategy mu0Strategy = Mu0Strategy::SingleModel;
  bool restrictMuUToEligible = true;
  double clipLo = 0.005;
  double clipHi = 0.995;
  bool ridgeFallback = true;
  /// Substitute the clipped empirical mean when a classifier's training
  /// target has a single class; otherwise SingleClass propagates.
  bool singleClassFallback = true;

  /// Throws InvalidConfig if a nuisance in `required` has no model.
  void require(const std::set<NuisanceName>& required) const;
};

std::set<NuisanceName> nuisances_for_eif();
std::set<NuisanceName> nuisances_for_if();

/// Per-observation nuisance predictions. Entries not defined for an
/// observation (u and mu0 when r = 0, or any nuisance not requested) are NaN.
struct NuisanceSet {
  Eigen::VectorXd eta1, eta0, u, mu0, eps1, xi, gamma, chi, nu, omega1;
  /// Fold whose complement trained the models that predicted observation i.
  std::vector<int> heldOutFold;
  /// Training rows per fold.
  std::vector<std::vector<std::size_t>> trainingRows;
  std::set<NuisanceName> fitted;

  explicit NuisanceSet(std::size_t n = 0);
  std::size_t size() const noexcept { return heldOutFold.size(); }
};

struct PseudoOutcomes {
  Eigen::VectorXd xi, gamma, chi, nu;
};

/// Pseudo-outcomes for nested regressions; all four are zero when e = 0.
PseudoOutcomes build_pseudo_outcomes(const Eigen::VectorXd& y, const Eigen::VectorXd& e,
                                     const Eigen::VectorXd& mu0Hat, const Eigen::VectorXd& uHat,
                                     double clipLo, double clipHi);

/// A fitted nuisance together with the recipe for building its inputs.
struct NuisanceModel {
  NuisanceName name = NuisanceName::Eta;
  learners::ModelPtr model;
  FeatureSpec features;

  /// Predictions on `rows`, optionally forcing the treatment value.
  Eigen::VectorXd predict(const CoarsenedDataset& data, std::span<const std::size_t> rows,
                          std::optional<int> treatment = std::nullopt) const;
};

FeatureSpec nuisance_features(NuisanceName name, const NuisanceModelSpec& spec, Mu0Strategy strategy);

/// Binary classifier fit with the single-class fallback (constant clipped mean).
learners::ModelPtr fit_classifier(const learners::LearnerSpec& spec, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, const learners::FitOptions& opts,
                                  bool singleClassFallback = true);
/// Regression fit; a constant target gives a constant model.
learners::ModelPtr fit_regression(const learners::LearnerSpec& spec, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, const learners::FitOptions& opts);

NuisanceModel fit_eta(const CoarsenedDataset& data, std::span<const std::size_t> rows,
                      const NuisanceSpec& spec, std::uint64_t seed);
NuisanceModel fit_u(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                    std::span<const std::size_t> rows, const NuisanceSpec& spec, std::uint64_t seed);
NuisanceModel fit_mu0(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                      std::span<const std::size_t> rows, const NuisanceSpec& spec, std::uint64_t seed);
NuisanceModel fit_eps1(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                       std::span<const std::size_t> rows, const NuisanceSpec& spec, std::uint64_t seed);
/// Nested regression of `target` (one value per entry of `rows`) on the
/// nuisance's conditioning set; rows must already be the defining subset.
NuisanceModel fit_nested(NuisanceName name, const CoarsenedDataset& data, std::span<const std::size_t> rows,
                         const Eigen::VectorXd& target, const NuisanceSpec& spec, std::uint64_t seed);

/// Fits the requested nuisances on `train` and predicts them on `test`.
/// Writes into `out` at the test indices.
void fit_and_predict(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                     std::span<const std::size_t> train, std::span<const std::size_t> test,
                     const NuisanceSpec& spec, const std::set<NuisanceName>& required, std::uint64_t seed,
                     NuisanceSet& out);

/// Cross-fitting: for each fold j, nuisances trained on the other folds
/// predict fold j. Errors are rethrown with the fold and nuisance attached.
NuisanceSet crossfit(const CoarsenedDataset& data, const EligibilityRule& rule, const NuisanceSpec& spec,
                     const FoldAssignment& folds, const std::set<NuisanceName>& required, std::uint64_t seed);

/// Nuisances fit and evaluated on the full sample (no sample splitting).
NuisanceSet fit_full_sample(const CoarsenedDataset& data, const EligibilityRule& rule, const NuisanceSpec& spec,
                            const std::set<NuisanceName>& required, std::uint64_t seed);

}  // namespace attelig
