#include "attelig/estimators.hpp"

#include <cmath>
#include <random>

#include "attelig/error.hpp"
#include "attelig/stats.hpp"

namespace attelig {

namespace {

constexpr double kDegenerateAlpha = 1e-8;

nlohmann::json number_or_null(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

struct Counts {
  std::size_t complete = 0;
  std::size_t treatedEligibleComplete = 0;
};

Counts count(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig) {
  Counts c;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].r != 1) continue;
    ++c.complete;
    if (data[i].a == 1 && elig[i] && *elig[i] == 1) ++c.treatedEligibleComplete;
  }
  return c;
}

EstimateReport base_report(EstimatorKind kind, const CoarsenedDataset& data,
                           const std::vector<std::optional<int>>& elig, double level) {
  EstimateReport r;
  r.estimator = kind;
  r.level = level;
  r.n = data.size();
  const auto c = count(data, elig);
  r.nComplete = c.complete;
  r.nTreatedEligibleComplete = c.treatedEligibleComplete;
  return r;
}

void require_fitted(const NuisanceSet& nuis, const std::set<NuisanceName>& needed, const char* what) {
  for (auto n : needed) {
    if (!nuis.fitted.count(n)) {
      throw Error(ErrorCode::InvalidArgument,
                  std::string(what) + " needs nuisance '" + std::string(to_string(n)) + "'");
    }
  }
}

bool has_all(const NuisanceSet& nuis, const std::set<NuisanceName>& needed) {
  for (auto n : needed) {
    if (!nuis.fitted.count(n)) return false;
  }
  return true;
}

IfEstimate finish_ratio(EstimatorKind kind, const CoarsenedDataset& data,
                        const std::vector<std::optional<int>>& elig, const Eigen::VectorXd& alpha,
                        const Eigen::VectorXd& beta, double level) {
  IfEstimate out;
  out.ratio = ratio_estimate(alpha, beta);
  out.report = base_report(kind, data, elig, level);
  out.report.thetaHat = out.ratio.thetaHat;
  out.report.se = out.ratio.se;
  const auto [lo, hi] = wald_interval(out.ratio.thetaHat, out.ratio.se, level);
  out.report.ciLo = lo;
  out.report.ciHi = hi;
  return out;
}

}  // namespace

std::string_view to_string(EstimatorKind k) noexcept {
  switch (k) {
    case EstimatorKind::CC: return "CC";
    case EstimatorKind::IWOR: return "IWOR";
    case EstimatorKind::IF: return "IF";
    case EstimatorKind::EIF: return "EIF";
  }
  return "?";
}

EstimatorKind parse_estimator_kind(std::string_view s) {
  if (s == "CC" || s == "cc") return EstimatorKind::CC;
  if (s == "IWOR" || s == "iwor") return EstimatorKind::IWOR;
  if (s == "IF" || s == "if") return EstimatorKind::IF;
  if (s == "EIF" || s == "eif") return EstimatorKind::EIF;
  throw Error(ErrorCode::InvalidConfig, "unknown estimator '" + std::string(s) + "'");
}

double alpha_dot(const ObsCore& o, const ObsNuisance& n) {
  if (o.a == 0) return 0.0;
  const double re = o.r == 1 ? static_cast<double>(o.e) : 0.0;
  return (1.0 - o.r / n.eta1) * n.eps1 + re / n.eta1;
}

double beta_dot(const ObsCore& o, const ObsNuisance& n) {
  const double e = o.r == 1 ? static_cast<double>(o.e) : 0.0;
  if (o.a == 1) {
    double v = n.eps1 * o.y - n.xi;
    if (o.r == 1) {
      const double e_mu0 = e != 0.0 ? e * n.mu0 : 0.0;
      v += ((e - n.eps1) * o.y - (e_mu0 - n.xi)) / n.eta1;
    }
    return v;
  }
  const double nested = n.gamma * o.y - n.chi;
  double v = -(n.eta0 / n.eta1) * nested;
  if (o.r == 1) {
    const double weighted = e != 0.0 ? e * n.u / (1.0 - n.u) * (o.y - n.mu0) : 0.0;
    v -= (weighted - nested) / n.eta1;
  }
  return v;
}

double alpha_prime_dot(const ObsCore& o, const ObsNuisance& n) {
  if (o.a == 0) return 0.0;
  const double re = o.r == 1 ? static_cast<double>(o.e) : 0.0;
  return (1.0 - o.r / n.eta1) * n.omega1 + re / n.eta1;
}

double beta_prime_dot(const ObsCore& o, const ObsNuisance& n) {
  double v = o.a == 1 ? (1.0 - o.r / n.eta1) * n.nu : 0.0;
  if (o.r == 1 && o.e == 1) {
    const double arm = o.a == 1 ? 1.0 : -n.u / (1.0 - n.u);
    v += (o.y - n.mu0) / n.eta1 * arm;
  }
  return v;
}

ObsNuisance nuisance_at(const NuisanceSet& s, std::size_t i) {
  const auto k = static_cast<Eigen::Index>(i);
  return {s.eta1(k), s.eta0(k), s.u(k), s.mu0(k), s.eps1(k), s.xi(k), s.gamma(k), s.chi(k), s.nu(k), s.omega1(k)};
}

ObsCore core_at(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig, std::size_t i) {
  const auto& rec = data[i];
  return {rec.a, rec.r, elig[i].value_or(0), rec.y};
}

InfluenceContributions contributions(const CoarsenedDataset& data, const std::vector<std::optional<int>>& elig,
                                     const NuisanceSet& nuis) {
  if (nuis.size() != data.size()) throw Error(ErrorCode::InvalidArgument, "nuisance set size differs from dataset");
  const auto n = static_cast<Eigen::Index>(data.size());
  InfluenceContributions c;
  const bool eif = has_all(nuis, nuisances_for_eif());
  const bool inf = has_all(nuis, nuisances_for_if());
  if (eif) {
    c.alphaDot.resize(n);
    c.betaDot.resize(n);
  }
  if (inf) {
    c.alphaPrimeDot.resize(n);
    c.betaPrimeDot.resize(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto o = core_at(data, elig, static_cast<std::size_t>(i));
    const auto v = nuisance_at(nuis, static_cast<std::size_t>(i));
    if (eif) {
      c.alphaDot(i) = alpha_dot(o, v);
      c.betaDot(i) = beta_dot(o, v);
    }
    if (inf) {
      c.alphaPrimeDot(i) = alpha_prime_dot(o, v);
      c.betaPrimeDot(i) = beta_prime_dot(o, v);
    }
  }
  return c;
}

nlohmann::json EstimateReport::to_json() const {
  nlohmann::json j;
  j["estimator"] = std::string(to_string(estimator));
  j["theta_hat"] = thetaHat;
  j["se"] = number_or_null(se);
  j["ci_lo"] = number_or_null(ciLo);
  j["ci_hi"] = number_or_null(ciHi);
  j["level"] = level;
  j["n"] = n;
  j["n_complete"] = nComplete;
  j["n_treated_eligible_complete"] = nTreatedEligibleComplete;
  j["method"] = method;
  j["config_echo"] = configEcho;
  return j;
}

RatioEstimate ratio_estimate(const Eigen::VectorXd& alphaDot, const Eigen::VectorXd& betaDot) {
  if (alphaDot.size() != betaDot.size() || alphaDot.size() == 0) {
    throw Error(ErrorCode::InvalidArgument, "ratio_estimate: contribution vectors must be non-empty and equal length");
  }
  for (Eigen::Index i = 0; i < alphaDot.size(); ++i) {
    if (!std::isfinite(alphaDot(i)) || !std::isfinite(betaDot(i))) {
      throw Error(ErrorCode::InvalidArgument, "non-finite influence contribution at observation " + std::to_string(i));
    }
  }
  RatioEstimate r;
  const double n = static_cast<double>(alphaDot.size());
  r.alphaHat = mean(std::span<const double>(alphaDot.data(), alphaDot.size()));
  r.betaHat = mean(std::span<const double>(betaDot.data(), betaDot.size()));
  if (std::abs(r.alphaHat) < kDegenerateAlpha) {
    throw Error(ErrorCode::DegenerateAlpha, "mean alpha contribution " + format_double(r.alphaHat) +
                                                " is numerically zero (no treated eligible mass)");
  }
  r.thetaHat = r.betaHat / r.alphaHat;
  r.thetaStar = (betaDot - (r.betaHat / r.alphaHat) * alphaDot) / r.alphaHat;
  KahanSum sq;
  for (Eigen::Index i = 0; i < r.thetaStar.size(); ++i) sq.add(r.thetaStar(i) * r.thetaStar(i));
  r.se = std::sqrt(sq.value() / n / n);
  return r;
}

std::pair<double, double> wald_interval(double theta, double se, double level) {
  const double z = two_sided_z(level);
  return {theta - z * se, theta + z * se};
}

IfEstimate theta_eif(const CoarsenedDataset& data, const EligibilityRule& rule, const NuisanceSet& nuis,
                     double level) {
  require_fitted(nuis, nuisances_for_eif(), "EIF estimator");
  const auto elig = evaluate_eligibility(rule, data);
  const auto c = contributions(data, elig, nuis);
  return finish_ratio(EstimatorKind::EIF, data, elig, c.alphaDot, c.betaDot, level);
}

IfEstimate theta_if(const CoarsenedDataset& data, const EligibilityRule& rule, const NuisanceSet& nuis,
                    double level) {
  require_fitted(nuis, nuisances_for_if(), "IF estimator");
  const auto elig = evaluate_eligibility(rule, data);
  const auto c = contributions(data, elig, nuis);
  return finish_ratio(EstimatorKind::IF, data, elig, c.alphaPrimeDot, c.betaPrimeDot, level);
}

EstimateReport theta_cc(const CoarsenedDataset& data, const EligibilityRule& rule, const Eigen::VectorXd& mu0Hat,
                        double level) {
  const auto elig = evaluate_eligibility(rule, data);
  KahanSum s;
  std::size_t m = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].a != 1 || data[i].r != 1 || elig[i].value_or(0) != 1) continue;
    s.add(data[i].y - mu0Hat(static_cast<Eigen::Index>(i)));
    ++m;
  }
  if (m == 0) throw Error(ErrorCode::EmptyTreatedEligible, "no complete treated eligible records");
  auto r = base_report(EstimatorKind::CC, data, elig, level);
  r.thetaHat = s.value() / static_cast<double>(m);
  return r;
}

EstimateReport theta_iwor(const CoarsenedDataset& data, const EligibilityRule& rule, const Eigen::VectorXd& mu0Hat,
                          const Eigen::VectorXd& eta1Hat, double level) {
  const auto elig = evaluate_eligibility(rule, data);
  KahanSum num, den;
  std::size_t m = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].a != 1 || data[i].r != 1 || elig[i].value_or(0) != 1) continue;
    const auto k = static_cast<Eigen::Index>(i);
    num.add((data[i].y - mu0Hat(k)) / eta1Hat(k));
    den.add(1.0 / eta1Hat(k));
    ++m;
  }
  if (m == 0) throw Error(ErrorCode::EmptyTreatedEligible, "no complete treated eligible records");
  auto r = base_report(EstimatorKind::IWOR, data, elig, level);
  r.thetaHat = num.value() / den.value();
  return r;
}

BootstrapResult bootstrap_se(const std::function<double(const CoarsenedDataset&)>& estimator,
                             const CoarsenedDataset& data, int B, std::uint64_t seed, double level,
                             double thetaHat) {
  if (B < 50) throw Error(ErrorCode::InvalidArgument, "bootstrap needs B >= 50");
  const std::size_t n = data.size();
  std::vector<double> draws;
  draws.reserve(static_cast<std::size_t>(B));
  BootstrapResult out;
  out.replicates = B;
  std::string last;
  for (int b = 0; b < B; ++b) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = pick(rng);
    try {
      draws.push_back(estimator(data.subset(rows)));
    } catch (const Error& e) {
      ++out.skipped;
      last = e.what();
    }
  }
  if (out.skipped * 10 > B) {
    throw Error(ErrorCode::ResampleDegenerate, std::to_string(out.skipped) + " of " + std::to_string(B) +
                                                   " bootstrap resamples failed (last: " + last + ")");
  }
  out.se = draws.size() >= 2 ? sample_sd(draws) : 0.0;
  std::tie(out.ciLo, out.ciHi) = wald_interval(thetaHat, out.se, level);
  return out;
}

std::vector<EstimateReport> run_estimators(const CoarsenedDataset& data, const EligibilityRule& rule,
                                           const EstimationConfig& config) {
  validate_rule(rule, data.schema());
  std::vector<EstimateReport> out;
  const bool cc = config.suite.count(EstimatorKind::CC) > 0;
  const bool iwor = config.suite.count(EstimatorKind::IWOR) > 0;
  const bool eif = config.suite.count(EstimatorKind::EIF) > 0;
  const bool inf = config.suite.count(EstimatorKind::IF) > 0;

  auto method_base = [&](const NuisanceSpec& spec) {
    nlohmann::json m;
    m["seed"] = config.seed;
    m["clip"] = {spec.clipLo, spec.clipHi};
    m["mu0_strategy"] = std::string(to_string(spec.mu0Strategy));
    m["restrict_mu_u_to_eligible"] = spec.restrictMuUToEligible;
    return m;
  };

  if (cc || iwor) {
    std::set<NuisanceName> req{NuisanceName::Mu0};
    if (iwor) req.insert(NuisanceName::Eta);
    const auto seed = derive_seed(config.seed, 0xCC);
    const auto nuis = fit_full_sample(data, rule, config.parametricSpec, req, seed);
    auto with_boot = [&](EstimateReport r, const std::function<double(const CoarsenedDataset&)>& refit) {
      r.method = method_base(config.parametricSpec);
      r.method["bootstrap_B"] = config.bootstrapB;
      if (config.bootstrapB > 0) {
        const auto bs = bootstrap_se(refit, data, config.bootstrapB,
                                     derive_seed(config.seed, 0xB0 + static_cast<std::uint64_t>(r.estimator)),
                                     config.level, r.thetaHat);
        r.se = bs.se;
        r.ciLo = bs.ciLo;
        r.ciHi = bs.ciHi;
        r.method["bootstrap_skipped"] = bs.skipped;
      }
      r.configEcho = config.configEcho;
      return r;
    };
    if (cc) {
      auto refit = [&](const CoarsenedDataset& d) {
        const auto s = fit_full_sample(d, rule, config.parametricSpec, {NuisanceName::Mu0}, seed);
        return theta_cc(d, rule, s.mu0, config.level).thetaHat;
      };
      out.push_back(with_boot(theta_cc(data, rule, nuis.mu0, config.level), refit));
    }
    if (iwor) {
      auto refit = [&](const CoarsenedDataset& d) {
        const auto s = fit_full_sample(d, rule, config.parametricSpec, {NuisanceName::Mu0, NuisanceName::Eta}, seed);
        return theta_iwor(d, rule, s.mu0, s.eta1, config.level).thetaHat;
      };
      out.push_back(with_boot(theta_iwor(data, rule, nuis.mu0, nuis.eta1, config.level), refit));
    }
  }

  if (eif || inf) {
    std::set<NuisanceName> req;
    if (eif) req = nuisances_for_eif();
    if (inf) {
      for (auto n : nuisances_for_if()) req.insert(n);
    }
    const auto folds = assign_folds(data.size(), config.folds, derive_seed(config.seed, 0xF0));
    const auto nuis = crossfit(data, rule, config.crossfitSpec, folds, req, derive_seed(config.seed, 0xCF));
    auto decorate = [&](EstimateReport r) {
      r.method = method_base(config.crossfitSpec);
      r.method["folds"] = config.folds;
      r.configEcho = config.configEcho;
      return r;
    };
    if (inf) out.push_back(decorate(theta_if(data, rule, nuis, config.level).report));
    if (eif) out.push_back(decorate(theta_eif(data, rule, nuis, config.level).report));
  }
  return out;
}

}  // namespace attelig
