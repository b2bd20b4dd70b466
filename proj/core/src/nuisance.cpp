#include "attelig/nuisance.hpp"

#include <cmath>
#include <limits>

#include "attelig/error.hpp"
#include "attelig/stats.hpp"

namespace attelig {

using learners::TaskKind;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

learners::FitOptions fit_options(const NuisanceSpec& spec, std::uint64_t seed) {
  learners::FitOptions o;
  o.clipLo = spec.clipLo;
  o.clipHi = spec.clipHi;
  o.ridgeFallback = spec.ridgeFallback;
  o.seed = seed;
  return o;
}

const NuisanceModelSpec& model_spec(const NuisanceSpec& spec, NuisanceName name) {
  auto it = spec.models.find(name);
  if (it == spec.models.end()) {
    throw Error(ErrorCode::InvalidConfig, "no learner configured for nuisance '" + std::string(to_string(name)) + "'");
  }
  return it->second;
}

std::uint64_t nuisance_seed(std::uint64_t seed, NuisanceName name) {
  return derive_seed(seed, 0x4e00 + static_cast<std::uint64_t>(name));
}

bool eligible(const std::vector<std::optional<int>>& elig, std::size_t i) {
  return elig[i].has_value() && *elig[i] == 1;
}

NuisanceModel fit_on(NuisanceName name, const CoarsenedDataset& data, std::span<const std::size_t> rows,
                     const Eigen::VectorXd& target, const NuisanceSpec& spec, std::uint64_t seed) {
  if (rows.empty()) {
    throw Error(ErrorCode::EmptySubset, "no training rows for nuisance '" + std::string(to_string(name)) + "'");
  }
  const auto& ms = model_spec(spec, name);
  NuisanceModel out;
  out.name = name;
  out.features = nuisance_features(name, ms, spec.mu0Strategy);
  const DesignMatrix X = build_design(data, rows, out.features);
  const auto opts = fit_options(spec, nuisance_seed(seed, name));
  if (task_of(name) == TaskKind::Probability) {
    out.model = fit_classifier(ms.learner, X.values, target, opts, spec.singleClassFallback);
  } else {
    out.model = fit_regression(ms.learner, X.values, target, opts);
  }
  return out;
}

}  // namespace

std::string_view to_string(NuisanceName name) noexcept {
  switch (name) {
    case NuisanceName::Eta: return "eta";
    case NuisanceName::U: return "u";
    case NuisanceName::Mu0: return "mu0";
    case NuisanceName::Eps1: return "eps1";
    case NuisanceName::Xi: return "xi";
    case NuisanceName::Gamma: return "gamma";
    case NuisanceName::Chi: return "chi";
    case NuisanceName::Nu: return "nu";
    case NuisanceName::Omega1: return "omega1";
  }
  return "?";
}

NuisanceName parse_nuisance_name(std::string_view name) {
  for (auto n : {NuisanceName::Eta, NuisanceName::U, NuisanceName::Mu0, NuisanceName::Eps1, NuisanceName::Xi,
                 NuisanceName::Gamma, NuisanceName::Chi, NuisanceName::Nu, NuisanceName::Omega1}) {
    if (to_string(n) == name) return n;
  }
  if (name == "mu") return NuisanceName::Mu0;
  throw Error(ErrorCode::InvalidConfig, "unknown nuisance '" + std::string(name) + "'");
}

TaskKind task_of(NuisanceName name) noexcept {
  switch (name) {
    case NuisanceName::Eta:
    case NuisanceName::U:
    case NuisanceName::Eps1:
    case NuisanceName::Omega1: return TaskKind::Probability;
    default: return TaskKind::Regression;
  }
}

std::string_view to_string(Mu0Strategy s) noexcept {
  switch (s) {
    case Mu0Strategy::SingleModel: return "single_model";
    case Mu0Strategy::Stratify: return "stratify";
    case Mu0Strategy::FullInteractions: return "full_interactions";
  }
  return "?";
}

Mu0Strategy parse_mu0_strategy(std::string_view s) {
  if (s == "single_model") return Mu0Strategy::SingleModel;
  if (s == "stratify") return Mu0Strategy::Stratify;
  if (s == "full_interactions") return Mu0Strategy::FullInteractions;
  throw Error(ErrorCode::InvalidConfig, "unknown mu0 strategy '" + std::string(s) + "'");
}

void NuisanceSpec::require(const std::set<NuisanceName>& required) const {
  for (auto n : required) (void)model_spec(*this, n);
  if (!(clipLo > 0.0 && clipLo < clipHi && clipHi <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "clip bounds must satisfy 0 < lo < hi <= 1");
  }
}

std::set<NuisanceName> nuisances_for_eif() {
  return {NuisanceName::Eta, NuisanceName::U,     NuisanceName::Mu0, NuisanceName::Eps1,
          NuisanceName::Xi,  NuisanceName::Gamma, NuisanceName::Chi};
}

std::set<NuisanceName> nuisances_for_if() {
  return {NuisanceName::Eta, NuisanceName::U, NuisanceName::Mu0, NuisanceName::Nu, NuisanceName::Omega1};
}

NuisanceSet::NuisanceSet(std::size_t n)
    : eta1(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), kNaN)),
      eta0(eta1), u(eta1), mu0(eta1), eps1(eta1), xi(eta1), gamma(eta1), chi(eta1), nu(eta1), omega1(eta1),
      heldOutFold(n, -1) {}

PseudoOutcomes build_pseudo_outcomes(const Eigen::VectorXd& y, const Eigen::VectorXd& e,
                                     const Eigen::VectorXd& mu0Hat, const Eigen::VectorXd& uHat,
                                     double clipLo, double clipHi) {
  const Eigen::Index n = y.size();
  PseudoOutcomes p{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                   Eigen::VectorXd::Zero(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (e(i) == 0.0) continue;
    const double u = uHat(i);
    if (!(u >= clipLo && u <= clipHi) || u >= 1.0) {
      throw Error(ErrorCode::ClipViolation, "u-hat " + format_double(u) + " outside clip bounds");
    }
    const double odds = u / (1.0 - u);
    p.xi(i) = e(i) * mu0Hat(i);
    p.gamma(i) = e(i) * odds;
    p.chi(i) = e(i) * odds * mu0Hat(i);
    p.nu(i) = e(i) * (y(i) - mu0Hat(i));
  }
  return p;
}

Eigen::VectorXd NuisanceModel::predict(const CoarsenedDataset& data, std::span<const std::size_t> rows,
                                       std::optional<int> treatment) const {
  if (rows.empty()) return {};
  DesignOverrides ov;
  ov.treatment = treatment;
  return model->predict(build_design(data, rows, features, ov).values);
}

FeatureSpec nuisance_features(NuisanceName name, const NuisanceModelSpec& spec, Mu0Strategy strategy) {
  FeatureSpec f;
  if (spec.interceptOnly) {
    f.covariates = std::vector<std::string>{};
    return f;
  }
  f.covariates = spec.covariates;
  f.interactions = spec.interactions;
  switch (name) {
    case NuisanceName::Eta: f.includeTreatment = true; break;
    case NuisanceName::U: f.includeElig = true; break;
    case NuisanceName::Mu0:
      f.includeElig = true;
      if (strategy == Mu0Strategy::Stratify) {
        // Every training row has a = 0, so treatment terms carry no information.
        std::erase_if(f.interactions, [](const auto& p) { return p.first == "a" || p.second == "a"; });
      } else {
        f.includeTreatment = true;
        f.treatmentInteractions = strategy == Mu0Strategy::FullInteractions;
      }
      break;
    case NuisanceName::Eps1:
    case NuisanceName::Xi:
    case NuisanceName::Gamma:
    case NuisanceName::Chi: f.includeOutcome = true; break;
    case NuisanceName::Nu:
    case NuisanceName::Omega1: break;
  }
  return f;
}

learners::ModelPtr fit_classifier(const learners::LearnerSpec& spec, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, const learners::FitOptions& opts, bool singleClassFallback) {
  const double p = y.size() > 0 ? y.mean() : kNaN;
  if (p == 0.0 || p == 1.0) {
    if (!singleClassFallback) throw Error(ErrorCode::SingleClass, "binary target has a single class");
    return std::make_shared<learners::ConstantModel>(TaskKind::Probability, clip(p, opts.clipLo, opts.clipHi));
  }
  return learners::fit(spec, X, y, TaskKind::Probability, opts);
}

learners::ModelPtr fit_regression(const learners::LearnerSpec& spec, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, const learners::FitOptions& opts) {
  if (y.size() > 0 && y.maxCoeff() == y.minCoeff()) {
    return std::make_shared<learners::ConstantModel>(TaskKind::Regression, y(0));
  }
  return learners::fit(spec, X, y, TaskKind::Regression, opts);
}

NuisanceModel fit_eta(const CoarsenedDataset& data, std::span<const std::size_t> rows, const NuisanceSpec& spec,
                      std::uint64_t seed) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) r(static_cast<Eigen::Index>(k)) = data[rows[k]].r;
  return fit_on(NuisanceName::Eta, data, rows, r, spec, seed);
}

namespace {

std::vector<std::size_t> mu_u_rows(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                                   std::span<const std::size_t> rows, bool restrict) {
  std::vector<std::size_t> out;
  for (auto i : rows) {
    if (data[i].r != 1) continue;
    if (restrict && !eligible(elig, i)) continue;
    out.push_back(i);
  }
  return out;
}

}  // namespace

NuisanceModel fit_u(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                    std::span<const std::size_t> rows, const NuisanceSpec& spec, std::uint64_t seed) {
  const auto train = mu_u_rows(data, elig, rows, spec.restrictMuUToEligible);
  Eigen::VectorXd a(static_cast<Eigen::Index>(train.size()));
  for (std::size_t k = 0; k < train.size(); ++k) a(static_cast<Eigen::Index>(k)) = data[train[k]].a;
  return fit_on(NuisanceName::U, data, train, a, spec, seed);
}

NuisanceModel fit_mu0(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                      std::span<const std::size_t> rows, const NuisanceSpec& spec, std::uint64_t seed) {
  auto train = mu_u_rows(data, elig, rows, spec.restrictMuUToEligible);
  std::size_t controls = 0;
  for (auto i : train) controls += data[i].a == 0 ? 1 : 0;
  if (spec.mu0Strategy == Mu0Strategy::Stratify) {
    std::erase_if(train, [&](std::size_t i) { return data[i].a != 0; });
    const auto p = design_columns(data.schema(), nuisance_features(NuisanceName::Mu0, model_spec(spec, NuisanceName::Mu0),
                                                                   spec.mu0Strategy))
                       .size();
    if (controls < std::max<std::size_t>(p, 1)) {
      throw Error(ErrorCode::InsufficientControls, std::to_string(controls) + " control records for " +
                                                       std::to_string(p) + " outcome-model columns");
    }
  } else if (controls == 0) {
    throw Error(ErrorCode::InsufficientControls, "no control records among complete cases");
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(train.size()));
  for (std::size_t k = 0; k < train.size(); ++k) y(static_cast<Eigen::Index>(k)) = data[train[k]].y;
  return fit_on(NuisanceName::Mu0, data, train, y, spec, seed);
}

NuisanceModel fit_eps1(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                       std::span<const std::size_t> rows, const NuisanceSpec& spec, std::uint64_t seed) {
  std::vector<std::size_t> train;
  for (auto i : rows) {
    if (data[i].a == 1 && data[i].r == 1) train.push_back(i);
  }
  Eigen::VectorXd e(static_cast<Eigen::Index>(train.size()));
  for (std::size_t k = 0; k < train.size(); ++k) e(static_cast<Eigen::Index>(k)) = eligible(elig, train[k]) ? 1.0 : 0.0;
  return fit_on(NuisanceName::Eps1, data, train, e, spec, seed);
}

NuisanceModel fit_nested(NuisanceName name, const CoarsenedDataset& data, std::span<const std::size_t> rows,
                         const Eigen::VectorXd& target, const NuisanceSpec& spec, std::uint64_t seed) {
  if (static_cast<std::size_t>(target.size()) != rows.size()) {
    throw Error(ErrorCode::InvalidArgument, "nested target length differs from row count");
  }
  return fit_on(name, data, rows, target, spec, seed);
}

void fit_and_predict(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                     std::span<const std::size_t> train, std::span<const std::size_t> test,
                     const NuisanceSpec& spec, const std::set<NuisanceName>& required, std::uint64_t seed,
                     NuisanceSet& out) {
  auto need = [&](NuisanceName n) { return required.count(n) > 0; };
  auto scatter = [&](Eigen::VectorXd& dst, const std::vector<std::size_t>& rows, const Eigen::VectorXd& v) {
    for (std::size_t k = 0; k < rows.size(); ++k) dst(static_cast<Eigen::Index>(rows[k])) = v(static_cast<Eigen::Index>(k));
  };
  NuisanceName current = NuisanceName::Eta;
  try {
    const std::vector<std::size_t> test_rows(test.begin(), test.end());
    std::vector<std::size_t> test_cc;
    for (auto i : test) {
      if (data[i].r == 1) test_cc.push_back(i);
    }

    if (need(NuisanceName::Eta)) {
      current = NuisanceName::Eta;
      const auto m = fit_eta(data, train, spec, seed);
      scatter(out.eta1, test_rows, m.predict(data, test_rows, 1));
      scatter(out.eta0, test_rows, m.predict(data, test_rows, 0));
      out.fitted.insert(current);
    }

    const bool nested = need(NuisanceName::Xi) || need(NuisanceName::Gamma) || need(NuisanceName::Chi) ||
                        need(NuisanceName::Nu);
    // Training-fold complete cases with a known eligibility value of 1 feed the pseudo-outcomes.
    std::vector<std::size_t> train_cc_e;
    for (auto i : train) {
      if (data[i].r == 1 && eligible(elig, i)) train_cc_e.push_back(i);
    }
    Eigen::VectorXd train_u, train_mu0;

    if (need(NuisanceName::U) || need(NuisanceName::Gamma) || need(NuisanceName::Chi)) {
      current = NuisanceName::U;
      const auto m = fit_u(data, elig, train, spec, seed);
      if (need(NuisanceName::U)) scatter(out.u, test_cc, m.predict(data, test_cc));
      if (nested) train_u = m.predict(data, train_cc_e);
      out.fitted.insert(current);
    }
    if (need(NuisanceName::Mu0) || nested) {
      current = NuisanceName::Mu0;
      const auto m = fit_mu0(data, elig, train, spec, seed);
      if (need(NuisanceName::Mu0)) scatter(out.mu0, test_cc, m.predict(data, test_cc, 0));
      if (nested) train_mu0 = m.predict(data, train_cc_e, 0);
      out.fitted.insert(current);
    }
    if (need(NuisanceName::Eps1)) {
      current = NuisanceName::Eps1;
      const auto m = fit_eps1(data, elig, train, spec, seed);
      scatter(out.eps1, test_rows, m.predict(data, test_rows));
      out.fitted.insert(current);
    }

    // Pseudo-outcomes are defined on every training complete case; they are zero when E = 0.
    std::vector<std::size_t> treated_cc, control_cc;
    for (auto i : train) {
      if (data[i].r != 1) continue;
      (data[i].a == 1 ? treated_cc : control_cc).push_back(i);
    }
    std::vector<double> xi_t(data.size(), 0.0), gamma_t(data.size(), 0.0), chi_t(data.size(), 0.0),
        nu_t(data.size(), 0.0);
    if (nested) {
      const auto ne = static_cast<Eigen::Index>(train_cc_e.size());
      Eigen::VectorXd y(ne), e = Eigen::VectorXd::Ones(ne);
      for (Eigen::Index k = 0; k < ne; ++k) y(k) = data[train_cc_e[static_cast<std::size_t>(k)]].y;
      if (train_u.size() != ne) train_u = Eigen::VectorXd::Constant(ne, 0.5);
      const auto p = build_pseudo_outcomes(y, e, train_mu0, train_u, spec.clipLo, spec.clipHi);
      for (Eigen::Index k = 0; k < ne; ++k) {
        const auto i = train_cc_e[static_cast<std::size_t>(k)];
        xi_t[i] = p.xi(k);
        gamma_t[i] = p.gamma(k);
        chi_t[i] = p.chi(k);
        nu_t[i] = p.nu(k);
      }
    }
    auto nested_fit = [&](NuisanceName name, const std::vector<std::size_t>& rows, const std::vector<double>& t,
                          Eigen::VectorXd& dst) {
      current = name;
      Eigen::VectorXd target(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t k = 0; k < rows.size(); ++k) target(static_cast<Eigen::Index>(k)) = t[rows[k]];
      const auto m = fit_nested(name, data, rows, target, spec, seed);
      scatter(dst, test_rows, m.predict(data, test_rows));
      out.fitted.insert(name);
    };
    if (need(NuisanceName::Xi)) nested_fit(NuisanceName::Xi, treated_cc, xi_t, out.xi);
    if (need(NuisanceName::Gamma)) nested_fit(NuisanceName::Gamma, control_cc, gamma_t, out.gamma);
    if (need(NuisanceName::Chi)) nested_fit(NuisanceName::Chi, control_cc, chi_t, out.chi);
    if (need(NuisanceName::Nu)) nested_fit(NuisanceName::Nu, treated_cc, nu_t, out.nu);
    if (need(NuisanceName::Omega1)) {
      std::vector<double> e_t(data.size(), 0.0);
      for (auto i : treated_cc) e_t[i] = eligible(elig, i) ? 1.0 : 0.0;
      nested_fit(NuisanceName::Omega1, treated_cc, e_t, out.omega1);
    }
  } catch (const Error& e) {
    throw Error(e.code(), "nuisance " + std::string(to_string(current)) + ": " + e.message());
  }
}

NuisanceSet crossfit(const CoarsenedDataset& data, const EligibilityRule& rule, const NuisanceSpec& spec,
                     const FoldAssignment& folds, const std::set<NuisanceName>& required, std::uint64_t seed) {
  if (folds.fold.size() != data.size()) {
    throw Error(ErrorCode::InvalidFoldCount, "fold assignment does not match the dataset size");
  }
  spec.require(required);
  const auto elig = evaluate_eligibility(rule, data);
  NuisanceSet out(data.size());
  out.trainingRows.resize(static_cast<std::size_t>(folds.k));
  for (int j = 0; j < folds.k; ++j) {
    const auto test = folds.members(j);
    auto train = folds.complement(j);
    try {
      fit_and_predict(data, elig, train, test, spec, required, derive_seed(seed, static_cast<std::uint64_t>(j)), out);
    } catch (const Error& e) {
      throw Error(e.code(), "fold " + std::to_string(j) + ", " + e.message());
    }
    for (auto i : test) out.heldOutFold[i] = j;
    out.trainingRows[static_cast<std::size_t>(j)] = std::move(train);
  }
  return out;
}

NuisanceSet fit_full_sample(const CoarsenedDataset& data, const EligibilityRule& rule, const NuisanceSpec& spec,
                            const std::set<NuisanceName>& required, std::uint64_t seed) {
  spec.require(required);
  const auto elig = evaluate_eligibility(rule, data);
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  NuisanceSet out(data.size());
  fit_and_predict(data, elig, all, all, spec, required, seed, out);
  std::fill(out.heldOutFold.begin(), out.heldOutFold.end(), 0);
  out.trainingRows = {all};
  return out;
}

}  // namespace attelig
