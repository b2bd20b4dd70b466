#include "attelig/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "attelig/error.hpp"
#include "attelig/stats.hpp"

namespace attelig::oracle {

namespace {

using Key = std::vector<double>;

Key key(const std::vector<double>& l, std::initializer_list<double> rest) {
  Key k = l;
  k.insert(k.end(), rest.begin(), rest.end());
  return k;
}

/// Running numerator and denominator of a conditional expectation.
struct Ratio {
  KahanSum num;
  KahanSum den;
  void add(double p, double x) {
    num.add(p * x);
    den.add(p);
  }
};

using RatioMap = std::map<Key, Ratio>;

std::optional<double> lookup(const RatioMap& m, const Key& k) {
  auto it = m.find(k);
  if (it == m.end() || it->second.den.value() <= 0.0) return std::nullopt;
  return it->second.num.value() / it->second.den.value();
}

double require(const std::optional<double>& v, const char* what) {
  if (!v) throw Error(ErrorCode::ZeroMass, std::string("conditioning event of ") + what + " has zero probability");
  return *v;
}

double clip_prob(double p, const Perturbation& pert) { return clip(p, pert.clipLo, pert.clipHi); }

/// Precomputed exact conditionals of a distribution under a rule.
class Enumerator {
 public:
  Enumerator(const DiscreteJointDistribution& dist, const EligibilityRule& rule) : dist_(dist) {
    const auto schema = oracle_schema(dist.lstar_dim());
    validate_rule(rule, schema);
    for (const auto& at : dist.atoms()) {
      CoarsenedObservation obs;
      obs.lStar = at.lStar;
      obs.a = at.a;
      obs.y = at.y;
      obs.r = 1;
      obs.lEligMissing = std::vector<double>{at.lElig};
      const int e = evaluate_eligibility(rule, schema, obs).value_or(0);
      e_.push_back(e);
      const double p = at.prob;
      const auto& l = at.lStar;
      eta_[key(l, {double(at.a)})].add(p, at.r);
      pi_[l].add(p, at.a);
      muFull_[key(l, {double(at.a), at.lElig})].add(p, at.y);
      if (e == 1) aGivenElig_[key(l, {at.lElig})].add(p, at.a);
      if (at.r == 1) {
        muCc_[key(l, {double(at.a), at.lElig})].add(p, at.y);
        u_[key(l, {at.lElig})].add(p, at.a);
        lambdaCell_[key(l, {double(at.a), at.lElig})].add(p, 1.0);
        lambdaArm_[key(l, {double(at.a)})].add(p, 1.0);
        if (at.a == 1) {
          eps1_[key(l, {at.y})].add(p, e);
          omega1_[l].add(p, e);
        }
      }
    }
    // Nested targets need mu0 and u, which are complete only now.
    for (std::size_t i = 0; i < dist.atoms().size(); ++i) {
      const auto& at = dist.atoms()[i];
      if (at.r != 1) continue;
      const auto& l = at.lStar;
      const int e = e_[i];
      if (at.a == 1) {
        const double mu0 = e == 1 ? require(mu0_cc(l, at.lElig), "mu0") : 0.0;
        xi_[key(l, {at.y})].add(at.prob, e * mu0);
        nu_[l].add(at.prob, e == 1 ? at.y - mu0 : 0.0);
      } else {
        double odds = 0.0, mu0 = 0.0;
        if (e == 1) {
          const double u = require(u_at(l, at.lElig), "u");
          odds = u / (1.0 - u);
          mu0 = require(mu0_cc(l, at.lElig), "mu0");
        }
        gamma_[key(l, {at.y})].add(at.prob, odds);
        chi_[key(l, {at.y})].add(at.prob, odds * mu0);
      }
    }
  }

  const DiscreteJointDistribution& dist() const { return dist_; }
  int e(std::size_t i) const { return e_[i]; }

  std::optional<double> eta(const Key& l, int a) const { return lookup(eta_, key(l, {double(a)})); }
  std::optional<double> pi(const Key& l) const { return lookup(pi_, l); }
  std::optional<double> mu0_cc(const Key& l, double lem) const { return lookup(muCc_, key(l, {0.0, lem})); }
  std::optional<double> mu_full(const Key& l, int a, double lem) const {
    return lookup(muFull_, key(l, {double(a), lem}));
  }
  std::optional<double> u_at(const Key& l, double lem) const { return lookup(u_, key(l, {lem})); }

  ObsNuisance nuisance(const Key& l, int a, int r, int e, std::optional<double> lem, double y) const {
    ObsNuisance n{};
    n.eta1 = require(eta(l, 1), "eta1");
    n.eta0 = eta(l, 0).value_or(0.0);
    n.u = 0.0;
    n.mu0 = 0.0;
    n.eps1 = n.xi = n.gamma = n.chi = n.nu = n.omega1 = 0.0;
    if (a == 1) {
      n.eps1 = require(lookup(eps1_, key(l, {y})), "eps1");
      n.xi = require(lookup(xi_, key(l, {y})), "xi");
      n.nu = require(lookup(nu_, l), "nu");
      n.omega1 = require(lookup(omega1_, l), "omega1");
    } else {
      n.gamma = require(lookup(gamma_, key(l, {y})), "gamma");
      n.chi = require(lookup(chi_, key(l, {y})), "chi");
    }
    if (r == 1 && e == 1 && lem) {
      n.u = require(u_at(l, *lem), "u");
      n.mu0 = require(mu0_cc(l, *lem), "mu0");
    }
    return n;
  }

  ObsNuisance nuisance_at(std::size_t i) const {
    const auto& at = dist_.atoms()[i];
    return nuisance(at.lStar, at.a, at.r, e_[i], at.r == 1 ? std::optional<double>(at.lElig) : std::nullopt, at.y);
  }

  ObsCore core(std::size_t i) const {
    const auto& at = dist_.atoms()[i];
    return {at.a, at.r, e_[i], at.y};
  }

  Functional functional() const {
    KahanSum alpha, beta;
    for (std::size_t i = 0; i < dist_.atoms().size(); ++i) {
      const auto& at = dist_.atoms()[i];
      if (at.a != 1 || at.r != 1 || e_[i] != 1) continue;
      const double w = at.prob / require(eta(at.lStar, 1), "eta1");
      alpha.add(w);
      beta.add(w * (at.y - require(mu0_cc(at.lStar, at.lElig), "mu0")));
    }
    if (alpha.value() <= 0.0) throw Error(ErrorCode::ZeroMass, "no treated, eligible complete cases");
    return {alpha.value(), beta.value(), beta.value() / alpha.value()};
  }

  double density_ratio_discrepancy() const {
    double worst = 0.0;
    for (const auto& [k, cell] : u_) {
      const Key l(k.begin(), k.end() - 1);
      const double lem = k.back();
      const auto c0 = lookup_mass(lambdaCell_, key(l, {0.0, lem}));
      const auto c1 = lookup_mass(lambdaCell_, key(l, {1.0, lem}));
      const auto arm0 = lookup_mass(lambdaArm_, key(l, {0.0}));
      const auto arm1 = lookup_mass(lambdaArm_, key(l, {1.0}));
      if (c0 <= 0.0 || arm0 <= 0.0 || arm1 <= 0.0) continue;
      const double lhs = (c1 / arm1) / (c0 / arm0);
      const double u = *u_at(l, lem);
      const double p = *pi(l);
      const double rhs = u / (1.0 - u) * ((1.0 - p) * *eta(l, 0)) / (p * *eta(l, 1));
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
  }

  double positivity() const {
    double margin = 1.0;
    for (const auto& [k, r] : eta_) margin = std::min(margin, r.num.value() / r.den.value());
    for (const auto& [k, r] : aGivenElig_) {
      const double p = r.num.value() / r.den.value();
      margin = std::min({margin, p, 1.0 - p});
    }
    return margin;
  }

 private:
  static double lookup_mass(const RatioMap& m, const Key& k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second.den.value();
  }

  const DiscreteJointDistribution& dist_;
  std::vector<int> e_;
  RatioMap eta_, pi_, muFull_, muCc_, u_, lambdaCell_, lambdaArm_, eps1_, omega1_, xi_, nu_, gamma_, chi_,
      aGivenElig_;
};

ObsNuisance perturb(ObsNuisance n, const Perturbation& pert) {
  for (const auto& [which, f] : pert.factors) {
    switch (which) {
      case Perturbable::Eta1: n.eta1 = clip_prob(n.eta1 * f, pert); break;
      case Perturbable::Eta0: n.eta0 = clip_prob(n.eta0 * f, pert); break;
      case Perturbable::U: n.u = clip_prob(n.u * f, pert); break;
      case Perturbable::Mu0: n.mu0 *= f; break;
      case Perturbable::Eps1: n.eps1 = clip_prob(n.eps1 * f, pert); break;
      case Perturbable::Xi: n.xi *= f; break;
      case Perturbable::Gamma: n.gamma *= f; break;
      case Perturbable::Chi: n.chi *= f; break;
    }
  }
  return n;
}

/// Dirichlet(1, ..., 1) mixed with the uniform vector.
std::vector<double> simplex_draw(std::mt19937_64& rng, std::size_t k, double floor) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> v(k);
  double total = 0.0;
  for (auto& x : v) total += (x = g(rng));
  for (auto& x : v) x = (1.0 - floor) * x / total + floor / static_cast<double>(k);
  return v;
}

struct D1Tables {
  double pL1 = 0.4;
  double pA1[2] = {0.3, 0.6};                      // by l
  double pR1[2][2] = {{0.7, 0.8}, {0.6, 0.9}};     // by l, a
  double pHigh[2][2] = {{0.3, 0.5}, {0.4, 0.7}};   // P(l_elig = 6 | l, a)
  // P(y | l, l_elig index, a) for y = 0, 1, 2.
  double pY[2][2][2][3] = {
      {{{0.5, 0.3, 0.2}, {0.4, 0.4, 0.2}}, {{0.3, 0.4, 0.3}, {0.2, 0.3, 0.5}}},
      {{{0.4, 0.4, 0.2}, {0.3, 0.3, 0.4}}, {{0.2, 0.5, 0.3}, {0.1, 0.3, 0.6}}},
  };
};

DiscreteJointDistribution build_d1(bool violateMar, std::string name) {
  const D1Tables t;
  const double lem[2] = {4.0, 6.0};
  std::vector<Atom> atoms;
  for (int l = 0; l < 2; ++l) {
    const double pl = l == 1 ? t.pL1 : 1.0 - t.pL1;
    for (int a = 0; a < 2; ++a) {
      const double pa = a == 1 ? t.pA1[l] : 1.0 - t.pA1[l];
      for (int m = 0; m < 2; ++m) {
        const double pm = m == 1 ? t.pHigh[l][a] : 1.0 - t.pHigh[l][a];
        double pr1 = t.pR1[l][a];
        if (violateMar && l == 0 && m == 0) pr1 *= 0.1;
        for (int r = 0; r < 2; ++r) {
          const double pr = r == 1 ? pr1 : 1.0 - pr1;
          for (int y = 0; y < 3; ++y) {
            atoms.push_back({{double(l)}, a, r, lem[m], double(y), pl * pa * pm * pr * t.pY[l][m][a][y]});
          }
        }
      }
    }
  }
  return DiscreteJointDistribution(std::move(atoms), 0.05, std::move(name));
}

}  // namespace

DiscreteJointDistribution::DiscreteJointDistribution(std::vector<Atom> atoms, double epsilon, std::string name)
    : atoms_(std::move(atoms)), epsilon_(epsilon), name_(std::move(name)) {
  if (atoms_.empty()) throw Error(ErrorCode::InvalidDistribution, "distribution has no atoms");
  dim_ = atoms_.front().lStar.size();
  KahanSum total;
  std::set<Key> seen;
  for (const auto& at : atoms_) {
    if (at.lStar.size() != dim_) throw Error(ErrorCode::InvalidDistribution, "atoms have different L* dimensions");
    if (!(at.prob > 0.0)) throw Error(ErrorCode::InvalidDistribution, "atom probability must be positive");
    if ((at.a != 0 && at.a != 1) || (at.r != 0 && at.r != 1)) {
      throw Error(ErrorCode::InvalidDistribution, "a and r must be 0 or 1");
    }
    if (!std::isfinite(at.lElig) || !std::isfinite(at.y)) {
      throw Error(ErrorCode::InvalidDistribution, "atom values must be finite");
    }
    if (!seen.insert(key(at.lStar, {double(at.a), double(at.r), at.lElig, at.y})).second) {
      throw Error(ErrorCode::InvalidDistribution, "duplicate atom");
    }
    total.add(at.prob);
  }
  if (std::abs(total.value() - 1.0) > 1e-12) {
    throw Error(ErrorCode::InvalidDistribution,
                "atom probabilities sum to " + format_double(total.value()) + ", not 1");
  }
}

CovariateSchema oracle_schema(std::size_t lstarDim) {
  std::vector<Covariate> cov;
  for (std::size_t j = 0; j < lstarDim; ++j) cov.push_back({"l" + std::to_string(j + 1), CovariateKind::Numeric, {}});
  cov.push_back({"l_elig", CovariateKind::Numeric, {}, Partition::EligibilityMissing});
  return CovariateSchema(std::move(cov));
}

EligibilityRule default_oracle_rule() { return EligibilityRule::threshold("l_elig", Comparator::GreaterEqual, 5.0); }

DiscreteJointDistribution make_d1() { return build_d1(false, "d1"); }
DiscreteJointDistribution make_d1_mar_violating() { return build_d1(true, "d1_mar_violating"); }

DiscreteJointDistribution random_mar_distribution(std::uint64_t seed, const RandomOptions& o) {
  if (o.lstarLevels < 1 || o.eligValues.empty() || o.yValues.empty()) {
    throw Error(ErrorCode::InvalidArgument, "random distribution needs non-empty supports");
  }
  std::mt19937_64 rng(seed);
  const auto nl = static_cast<std::size_t>(o.lstarLevels);
  const std::size_t nm = o.eligValues.size();
  const std::size_t ny = o.yValues.size();
  const auto pl = simplex_draw(rng, nl, o.floor);
  std::vector<Atom> atoms;
  for (std::size_t l = 0; l < nl; ++l) {
    const double pa1 = simplex_draw(rng, 2, o.floor)[1];
    for (int a = 0; a < 2; ++a) {
      const double pa = a == 1 ? pa1 : 1.0 - pa1;
      const double pr1 = simplex_draw(rng, 2, o.floor)[1];
      const auto pm = simplex_draw(rng, nm, o.floor);
      for (std::size_t m = 0; m < nm; ++m) {
        const auto py = simplex_draw(rng, ny, o.floor);
        double r1 = pr1;
        if (o.marViolation != 0.0) {
          const double centred = nm > 1 ? static_cast<double>(m) / static_cast<double>(nm - 1) - 0.5 : 0.0;
          r1 = clip(pr1 + o.marViolation * centred, 0.05, 0.95);
        }
        for (int r = 0; r < 2; ++r) {
          const double pr = r == 1 ? r1 : 1.0 - r1;
          for (std::size_t y = 0; y < ny; ++y) {
            atoms.push_back({{double(l)}, a, r, o.eligValues[m], o.yValues[y], pl[l] * pa * pm[m] * pr * py[y]});
          }
        }
      }
    }
  }
  // Renormalise away the rounding of the products.
  KahanSum total;
  for (const auto& at : atoms) total.add(at.prob);
  for (auto& at : atoms) at.prob /= total.value();
  return DiscreteJointDistribution(std::move(atoms), 0.01, "random_" + std::to_string(seed));
}

double enumerate_true_atte(const DiscreteJointDistribution& dist, const EligibilityRule& rule) {
  const Enumerator en(dist, rule);
  KahanSum mass, effect;
  for (std::size_t i = 0; i < dist.atoms().size(); ++i) {
    const auto& at = dist.atoms()[i];
    if (at.a != 1 || en.e(i) != 1) continue;
    const double mu1 = require(en.mu_full(at.lStar, 1, at.lElig), "mu1");
    const double mu0 = require(en.mu_full(at.lStar, 0, at.lElig), "mu0");
    mass.add(at.prob);
    effect.add(at.prob * (mu1 - mu0));
  }
  if (mass.value() <= 0.0) throw Error(ErrorCode::ZeroMass, "P(A = 1, E = 1) is zero");
  return effect.value() / mass.value();
}

Functional enumerate_identification_functional(const DiscreteJointDistribution& dist, const EligibilityRule& rule) {
  return Enumerator(dist, rule).functional();
}

InfluenceMeans enumerate_eif_means(const DiscreteJointDistribution& dist, const EligibilityRule& rule) {
  const Enumerator en(dist, rule);
  const auto f = en.functional();
  KahanSum a, b;
  for (std::size_t i = 0; i < dist.atoms().size(); ++i) {
    const double p = dist.atoms()[i].prob;
    const auto o = en.core(i);
    const auto n = en.nuisance_at(i);
    a.add(p * alpha_dot(o, n));
    b.add(p * beta_dot(o, n));
  }
  return {a.value() - f.alpha, b.value() - f.beta};
}

InfluenceMeans enumerate_if_means(const DiscreteJointDistribution& dist, const EligibilityRule& rule) {
  const Enumerator en(dist, rule);
  const auto f = en.functional();
  KahanSum a, b;
  for (std::size_t i = 0; i < dist.atoms().size(); ++i) {
    const double p = dist.atoms()[i].prob;
    const auto o = en.core(i);
    const auto n = en.nuisance_at(i);
    a.add(p * alpha_prime_dot(o, n));
    b.add(p * beta_prime_dot(o, n));
  }
  return {a.value() - f.alpha, b.value() - f.beta};
}

double check_density_ratio_identity(const DiscreteJointDistribution& dist, const EligibilityRule& rule) {
  return Enumerator(dist, rule).density_ratio_discrepancy();
}

double check_total_expectation(const DiscreteJointDistribution& dist, const EligibilityRule& rule) {
  const Enumerator en(dist, rule);
  // Per (l*, a): mass, complete mass, and E[X R] pieces for X = E and X = EY.
  struct Cell {
    KahanSum all, complete, eComplete, eyComplete;
  };
  std::map<Key, Cell> cells;
  for (std::size_t i = 0; i < dist.atoms().size(); ++i) {
    const auto& at = dist.atoms()[i];
    auto& c = cells[key(at.lStar, {double(at.a)})];
    c.all.add(at.prob);
    if (at.r == 1) {
      c.complete.add(at.prob);
      c.eComplete.add(at.prob * en.e(i));
      c.eyComplete.add(at.prob * en.e(i) * at.y);
    }
  }
  double worst = 0.0;
  for (const auto& [k, c] : cells) {
    const double pc = c.complete.value();
    if (pc <= 0.0) continue;
    const double pB = c.all.value();
    for (const double xc : {c.eComplete.value(), c.eyComplete.value()}) {
      const double lhs = (xc / pc) * (pc / pB);
      const double rhs = xc / pB;
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

double mar_certificate_discrepancy(const DiscreteJointDistribution& dist) {
  // (l*, a) -> r -> (y, l_elig) -> mass
  std::map<Key, std::map<int, std::map<std::pair<double, double>, KahanSum>>> cells;
  std::map<Key, std::map<int, KahanSum>> totals;
  for (const auto& at : dist.atoms()) {
    const Key k = key(at.lStar, {double(at.a)});
    cells[k][at.r][{at.y, at.lElig}].add(at.prob);
    totals[k][at.r].add(at.prob);
  }
  double worst = 0.0;
  for (const auto& [k, byR] : cells) {
    if (byR.size() < 2) continue;
    const double t0 = totals[k][0].value();
    const double t1 = totals[k][1].value();
    std::set<std::pair<double, double>> support;
    for (const auto& [r, m] : byR) {
      for (const auto& [yl, s] : m) support.insert(yl);
    }
    for (const auto& yl : support) {
      auto cond = [&](int r, double t) {
        const auto& m = byR.at(r);
        auto it = m.find(yl);
        return it == m.end() ? 0.0 : it->second.value() / t;
      };
      worst = std::max(worst, std::abs(cond(1, t1) - cond(0, t0)));
    }
  }
  return worst;
}

double positivity_margin(const DiscreteJointDistribution& dist, const EligibilityRule& rule) {
  return Enumerator(dist, rule).positivity();
}

std::string_view to_string(Perturbable p) noexcept {
  switch (p) {
    case Perturbable::Eta1: return "eta1";
    case Perturbable::Eta0: return "eta0";
    case Perturbable::U: return "u";
    case Perturbable::Mu0: return "mu0";
    case Perturbable::Eps1: return "eps1";
    case Perturbable::Xi: return "xi";
    case Perturbable::Gamma: return "gamma";
    case Perturbable::Chi: return "chi";
  }
  return "?";
}

Perturbable parse_perturbable(std::string_view s) {
  for (auto p : {Perturbable::Eta1, Perturbable::Eta0, Perturbable::U, Perturbable::Mu0, Perturbable::Eps1,
                 Perturbable::Xi, Perturbable::Gamma, Perturbable::Chi}) {
    if (to_string(p) == s) return p;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown nuisance '" + std::string(s) + "'");
}

Remainder check_remainder_structure(const DiscreteJointDistribution& dist, const EligibilityRule& rule,
                                    const Perturbation& perturbation) {
  const Enumerator en(dist, rule);
  const auto f = en.functional();
  KahanSum rAlpha, rBeta, dotAlpha, dotBeta;
  for (std::size_t i = 0; i < dist.atoms().size(); ++i) {
    const double p = dist.atoms()[i].prob;
    const auto o = en.core(i);
    const auto t = en.nuisance_at(i);
    const auto b = perturb(t, perturbation);
    dotAlpha.add(p * alpha_dot(o, b));
    dotBeta.add(p * beta_dot(o, b));

    const double A = o.a;
    const double ratio = 1.0 - t.eta1 / b.eta1;
    rAlpha.add(p * A * (b.eps1 - t.eps1) * ratio);
    double rb = A * ratio * (o.y * (b.eps1 - t.eps1) - (b.xi - t.xi));
    // Both product terms enter with a plus sign: expanding -E mu0bar as
    // -E mu0 + E (mu0 - mu0bar) and integrating R out given (L*, A = 0, Y)
    // leaves +(mu0 - mu0bar) and +(eta0 - eta0bar).
    if (o.r == 1 && o.e == 1) {
      rb += (t.mu0 - b.mu0) / b.eta1 * (t.u * (1.0 - b.u) - b.u * (1.0 - t.u)) / (1.0 - b.u);
    }
    if (o.a == 0) rb += (t.eta0 - b.eta0) / b.eta1 * (o.y * (b.gamma - t.gamma) - (b.chi - t.chi));
    rBeta.add(p * rb);
  }
  return {rAlpha.value(), rBeta.value(), dotAlpha.value() - f.alpha, dotBeta.value() - f.beta};
}

ObsNuisance true_nuisance(const DiscreteJointDistribution& dist, const EligibilityRule& rule,
                          const std::vector<double>& lStar, int a, int r, std::optional<double> lElig, double y) {
  const Enumerator en(dist, rule);
  int e = 0;
  if (r == 1 && lElig) {
    CoarsenedObservation obs;
    obs.lStar = lStar;
    obs.a = a;
    obs.r = 1;
    obs.y = y;
    obs.lEligMissing = std::vector<double>{*lElig};
    e = evaluate_eligibility(rule, oracle_schema(dist.lstar_dim()), obs).value_or(0);
  }
  return en.nuisance(lStar, a, r, e, lElig, y);
}

CoarsenedDataset sample(const DiscreteJointDistribution& dist, std::size_t n, std::uint64_t seed) {
  std::vector<double> w;
  w.reserve(dist.atoms().size());
  for (const auto& at : dist.atoms()) w.push_back(at.prob);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::mt19937_64 rng(seed);
  std::vector<CoarsenedObservation> recs;
  recs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& at = dist.atoms()[pick(rng)];
    CoarsenedObservation obs;
    obs.id = std::to_string(i + 1);
    obs.lStar = at.lStar;
    obs.a = at.a;
    obs.r = at.r;
    obs.y = at.y;
    if (at.r == 1) obs.lEligMissing = std::vector<double>{at.lElig};
    recs.push_back(std::move(obs));
  }
  return CoarsenedDataset(oracle_schema(dist.lstar_dim()), std::move(recs));
}

NuisanceSet true_nuisance_set(const DiscreteJointDistribution& dist, const EligibilityRule& rule,
                              const CoarsenedDataset& data) {
  const Enumerator en(dist, rule);
  const auto elig = evaluate_eligibility(rule, data);
  NuisanceSet set(data.size());
  std::map<Key, ObsNuisance> cache;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& rec = data[i];
    const std::optional<double> lem =
        rec.lEligMissing ? std::optional<double>(rec.lEligMissing->front()) : std::nullopt;
    const int e = elig[i].value_or(0);
    const Key k = key(rec.lStar, {double(rec.a), double(rec.r), double(e), lem ? 1.0 : 0.0, lem.value_or(0.0), rec.y});
    auto it = cache.find(k);
    if (it == cache.end()) it = cache.emplace(k, en.nuisance(rec.lStar, rec.a, rec.r, e, lem, rec.y)).first;
    const auto& n = it->second;
    const auto j = static_cast<Eigen::Index>(i);
    set.eta1(j) = n.eta1;
    set.eta0(j) = n.eta0;
    set.u(j) = n.u;
    set.mu0(j) = n.mu0;
    set.eps1(j) = n.eps1;
    set.xi(j) = n.xi;
    set.gamma(j) = n.gamma;
    set.chi(j) = n.chi;
    set.nu(j) = n.nu;
    set.omega1(j) = n.omega1;
    set.heldOutFold[i] = 0;
  }
  set.fitted = nuisances_for_eif();
  for (auto nm : nuisances_for_if()) set.fitted.insert(nm);
  return set;
}

std::vector<IdentityCheck> run_identity_checks(const DiscreteJointDistribution& dist, const EligibilityRule& rule) {
  std::vector<IdentityCheck> out;
  auto add = [&](std::string name, double d, double tol) { out.push_back({std::move(name), d, tol, d <= tol}); };

  add("mar_certificate", mar_certificate_discrepancy(dist), 1e-12);
  const double margin = positivity_margin(dist, rule);
  add("positivity", std::max(0.0, dist.epsilon() - margin), 0.0);

  const double truth = enumerate_true_atte(dist, rule);
  const auto f = enumerate_identification_functional(dist, rule);
  add("identification", std::abs(truth - f.theta), 1e-10);

  const auto eif = enumerate_eif_means(dist, rule);
  add("eif_mean_alpha", std::abs(eif.alpha), 1e-10);
  add("eif_mean_beta", std::abs(eif.beta), 1e-10);
  const auto inf = enumerate_if_means(dist, rule);
  add("if_mean_alpha", std::abs(inf.alpha), 1e-10);
  add("if_mean_beta", std::abs(inf.beta), 1e-10);

  Perturbation joint;
  joint.factors = {{Perturbable::Eps1, 1.1}, {Perturbable::Eta1, 0.9}, {Perturbable::Eta0, 1.1},
                   {Perturbable::U, 0.9},    {Perturbable::Mu0, 1.05}, {Perturbable::Xi, 0.95},
                   {Perturbable::Gamma, 1.1}, {Perturbable::Chi, 0.9}};
  const auto rem = check_remainder_structure(dist, rule, joint);
  add("remainder_alpha", std::abs(rem.rAlpha - rem.residualAlpha), 1e-10);
  add("remainder_beta", std::abs(rem.rBeta - rem.residualBeta), 1e-10);

  add("density_ratio", check_density_ratio_identity(dist, rule), 1e-12);
  add("total_expectation", check_total_expectation(dist, rule), 1e-12);
  return out;
}

}  // namespace attelig::oracle
