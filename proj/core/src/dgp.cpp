#include "attelig/dgp.hpp"

#include <cmath>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "attelig/error.hpp"
#include "attelig/stats.hpp"

namespace attelig::dgp {

namespace {

constexpr std::size_t kSite = 0, kGender = 1, kRace = 2, kBmi = 3, kSmoking = 4, kAge = 5, kEgfr = 6;

void check_probabilities(const std::vector<double>& p, std::size_t k, const char* what) {
  if (p.size() != k) throw Error(ErrorCode::InvalidConfig, std::string(what) + ": expected " + std::to_string(k) + " probabilities");
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw Error(ErrorCode::InvalidConfig, std::string(what) + ": negative probability");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw Error(ErrorCode::InvalidConfig, std::string(what) + ": probabilities must sum to 1");
}

void check_tn(const TruncatedNormal& t, const char* what) {
  if (!(t.sd > 0.0) || !(t.lo < t.hi) || !std::isfinite(t.mean)) {
    throw Error(ErrorCode::InvalidConfig, std::string(what) + ": need sd > 0 and lo < hi");
  }
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return unif_(rng_); }
  bool bernoulli(double p) { return uniform() < p; }

  std::size_t categorical(const std::vector<double>& p) {
    const double u = uniform();
    double c = 0.0;
    for (std::size_t k = 0; k + 1 < p.size(); ++k) {
      c += p[k];
      if (u < c) return k;
    }
    return p.size() - 1;
  }

  double truncated_normal(const TruncatedNormal& t) {
    const boost::math::normal_distribution<> z;
    const double a = boost::math::cdf(z, (t.lo - t.mean) / t.sd);
    const double b = boost::math::cdf(z, (t.hi - t.mean) / t.sd);
    double p = a + uniform() * (b - a);
    p = std::clamp(p, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
    return std::clamp(t.mean + t.sd * boost::math::quantile(z, p), t.lo, t.hi);
  }

  double gamma(double shape, double scale) { return std::gamma_distribution<double>(shape, scale)(rng_); }
  double normal(double mean, double sd) { return std::normal_distribution<double>(mean, sd)(rng_); }

 private:
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

std::vector<double> draw_lstar(Sampler& s, const LStarConfig& c) {
  std::vector<double> l(7);
  l[kSite] = static_cast<double>(s.categorical(c.site));
  l[kGender] = s.bernoulli(c.gender) ? 1.0 : 0.0;
  l[kRace] = s.bernoulli(c.race) ? 1.0 : 0.0;
  l[kBmi] = s.truncated_normal(c.baselineBmi);
  l[kSmoking] = static_cast<double>(s.categorical(c.smoking));
  l[kAge] = s.truncated_normal(c.baselineAge);
  l[kEgfr] = s.truncated_normal(c.eGFR);
  return l;
}

struct Compiled {
  LinearPredictor pi, eta, lambda, mu;
};

Compiled compile(const DgpConfig& c) {
  const auto schema = simulation_schema();
  return {LinearPredictor(c.betaPi, schema), LinearPredictor(c.betaEta, schema), LinearPredictor(c.betaLambda, schema),
          LinearPredictor(c.betaMu, schema)};
}

double draw_a1c(Sampler& s, const DgpConfig& c, double lambdaLp) {
  // (A1c - 3) ~ Gamma(shape alpha, rate alpha / exp(lp)), i.e. mean exp(lp).
  return 3.0 + s.gamma(c.alphaLambda, std::exp(lambdaLp) / c.alphaLambda);
}

}  // namespace

void LStarConfig::validate() const {
  check_probabilities(site, 3, "site");
  check_probabilities(smoking, 4, "smoking");
  if (!(gender >= 0.0 && gender <= 1.0)) throw Error(ErrorCode::InvalidConfig, "gender probability outside [0, 1]");
  if (!(race >= 0.0 && race <= 1.0)) throw Error(ErrorCode::InvalidConfig, "race probability outside [0, 1]");
  check_tn(baselineBmi, "baseline_bmi");
  check_tn(baselineAge, "baseline_age");
  check_tn(eGFR, "eGFR");
}

DgpConfig DgpConfig::published() {
  DgpConfig c;
  c.betaPi = {{"(Intercept)", 0.96},
              {"site[NC]", -0.64},
              {"site[SC]", -0.96},
              {"gender", 2.7e-2},
              {"race", 0.35},
              {"baseline_bmi", 1.6e-2},
              {"smoking_status[former]", -0.29},
              {"smoking_status[never]", -0.23},
              {"smoking_status[no_self_report]", -0.32},
              {"baseline_age", 3e-3},
              {"eGFR", -5e-3}};
  c.betaEta = {{"(Intercept)", 0.38},
               {"site[NC]", -0.38},
               {"site[SC]", 0.79},
               {"gender", -0.15},
               {"race", 0.10},
               {"baseline_bmi", -2e-2},
               {"smoking_status[former]", 0.44},
               {"smoking_status[never]", 0.32},
               {"smoking_status[no_self_report]", -2.58},
               {"baseline_age", 1.1e-2},
               {"eGFR", -1e-4},
               {"bs_type", 0.50}};
  c.betaLambda = {{"(Intercept)", 1.06},
                  {"site[NC]", 0.23},
                  {"site[SC]", -0.24},
                  {"gender", -0.10},
                  {"race", -6.9e-2},
                  {"baseline_bmi", -7.5e-3},
                  {"I(baseline_bmi^2)", 1e-4},
                  {"smoking_status[former]", -5.7e-2},
                  {"smoking_status[never]", -7.6e-2},
                  {"smoking_status[no_self_report]", -9.4e-2},
                  {"baseline_age", 9.2e-3},
                  {"eGFR", 7e-4},
                  {"bs_type", 0.10}};
  c.betaMu = {{"(Intercept)", -0.24},
              {"bs_type", 3.3e-2},
              {"site[NC]", 0.18},
              {"site[SC]", 0.14},
              {"gender", -0.14},
              {"race", -1.5e-2},
              {"baseline_bmi", -3.8e-3},
              {"smoking_status[former]", 3.8e-2},
              {"smoking_status[never]", 4.9e-2},
              {"smoking_status[no_self_report]", -0.15},
              {"baseline_age", 9.7e-4},
              {"eGFR", 1.4e-4},
              {"baseline_a1c", 2.2e-4},
              {"bs_type:baseline_a1c", 3.8e-3},
              {"gender:baseline_a1c", 4.8e-3},
              {"gender:baseline_bmi", 2e-3},
              {"smoking_status[no_self_report]:bs_type", 0.17},
              {"smoking_status[never]:bs_type", -2.4e-2},
              {"smoking_status[former]:bs_type", -2.4e-2},
              {"site[NC]:bs_type", -0.12},
              {"site[SC]:bs_type", -0.10}};
  return c;
}

void DgpConfig::validate() const {
  if (!(alphaLambda > 0.0)) throw Error(ErrorCode::InvalidConfig, "alpha_lambda must be > 0");
  if (!(sigmaY2 > 0.0)) throw Error(ErrorCode::InvalidConfig, "sigma_y2 must be > 0");
  if (!std::isfinite(eligThreshold)) throw Error(ErrorCode::InvalidConfig, "elig_threshold must be finite");
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "n must be >= 1");
  lStar.validate();
  const auto m = compile(*this);
  if (m.pi.uses_treatment() || m.pi.uses_elig()) {
    throw Error(ErrorCode::InvalidConfig, "beta_pi may only use L* terms");
  }
  if (m.eta.uses_elig() || m.lambda.uses_elig()) {
    throw Error(ErrorCode::InvalidConfig, "beta_eta and beta_lambda may not use baseline_a1c");
  }
}

CovariateSchema simulation_schema() {
  return CovariateSchema({
      {"site", CovariateKind::Categorical, {"WA", "NC", "SC"}, Partition::FullyObserved},
      {"gender", CovariateKind::Numeric, {}, Partition::FullyObserved},
      {"race", CovariateKind::Numeric, {}, Partition::FullyObserved},
      {"baseline_bmi", CovariateKind::Numeric, {}, Partition::FullyObserved},
      {"smoking_status", CovariateKind::Categorical, {"current", "former", "never", "no_self_report"}, Partition::FullyObserved},
      {"baseline_age", CovariateKind::Numeric, {}, Partition::FullyObserved},
      {"eGFR", CovariateKind::Numeric, {}, Partition::FullyObserved},
      {"baseline_a1c", CovariateKind::Numeric, {}, Partition::EligibilityMissing},
  });
}

EligibilityRule simulation_rule(double threshold) {
  return EligibilityRule::threshold("baseline_a1c", Comparator::GreaterEqual, threshold);
}

LinearPredictor::LinearPredictor(const Coefficients& coefficients, const CovariateSchema& schema) {
  auto bad = [](const std::string& term, const std::string& why) {
    throw Error(ErrorCode::InvalidConfig, "coefficient '" + term + "': " + why);
  };
  for (const auto& [name, value] : coefficients) {
    if (!std::isfinite(value)) bad(name, "value must be finite");
    Term term{value, {}};
    std::size_t start = 0;
    while (start <= name.size()) {
      auto end = name.find(':', start);
      if (end == std::string::npos) end = name.size();
      std::string f = name.substr(start, end - start);
      start = end + 1;
      Factor factor;
      if (f == "(Intercept)") {
        factor.kind = Factor::Kind::Intercept;
      } else if (f == "bs_type" || f == "a") {
        factor.kind = Factor::Kind::Treatment;
      } else {
        std::string cov = f;
        std::string level;
        factor.kind = Factor::Kind::Value;
        if (f.starts_with("I(") && f.ends_with("^2)")) {
          cov = f.substr(2, f.size() - 5);
          factor.kind = Factor::Kind::Square;
        } else if (auto lb = f.find('['); lb != std::string::npos && f.back() == ']') {
          cov = f.substr(0, lb);
          level = f.substr(lb + 1, f.size() - lb - 2);
          factor.kind = Factor::Kind::Level;
        }
        auto loc = schema.find(cov);
        if (!loc) bad(name, "unknown covariate '" + cov + "'");
        factor.elig = loc->partition == Partition::EligibilityMissing;
        factor.position = loc->position;
        const bool categorical = loc->covariate->kind == CovariateKind::Categorical;
        if (factor.kind == Factor::Kind::Level) {
          if (!categorical) bad(name, "'" + cov + "' is not categorical");
          auto idx = CovariateSchema::level_index(*loc->covariate, level);
          if (!idx) bad(name, "unknown level '" + level + "'");
          factor.level = *idx;
        } else if (categorical) {
          bad(name, "categorical '" + cov + "' needs a [level]");
        }
      }
      usesTreatment_ = usesTreatment_ || factor.kind == Factor::Kind::Treatment;
      usesElig_ = usesElig_ || factor.elig;
      term.factors.push_back(factor);
      if (end == name.size()) break;
    }
    terms_.push_back(std::move(term));
  }
}

double LinearPredictor::operator()(const std::vector<double>& lStar, int a, double a1c) const {
  double lp = 0.0;
  for (const auto& t : terms_) {
    double v = t.coefficient;
    for (const auto& f : t.factors) {
      const double x = f.elig ? a1c : (f.kind == Factor::Kind::Intercept || f.kind == Factor::Kind::Treatment ? 0.0 : lStar[f.position]);
      switch (f.kind) {
        case Factor::Kind::Intercept: break;
        case Factor::Kind::Treatment: v *= a; break;
        case Factor::Kind::Value: v *= x; break;
        case Factor::Kind::Square: v *= x * x; break;
        case Factor::Kind::Level: v *= static_cast<std::size_t>(x) == f.level ? 1.0 : 0.0; break;
      }
    }
    lp += v;
  }
  return lp;
}

std::vector<FullRecord> simulate_full(const DgpConfig& config) {
  config.validate();
  const auto m = compile(config);
  Sampler s(config.seed);
  const double sd_y = std::sqrt(config.sigmaY2);
  std::vector<FullRecord> out(config.n);
  for (auto& rec : out) {
    rec.lStar = draw_lstar(s, config.lStar);
    rec.a = s.bernoulli(expit(m.pi(rec.lStar, 0, 0.0))) ? 1 : 0;
    rec.r = s.bernoulli(expit(m.eta(rec.lStar, rec.a, 0.0))) ? 1 : 0;
    rec.a1c = draw_a1c(s, config, m.lambda(rec.lStar, rec.a, 0.0));
    rec.y = s.normal(m.mu(rec.lStar, rec.a, rec.a1c), sd_y);
  }
  return out;
}

CoarsenedDataset simulate_dataset(const DgpConfig& config) {
  auto full = simulate_full(config);
  std::vector<CoarsenedObservation> records;
  records.reserve(full.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    CoarsenedObservation o;
    o.id = std::to_string(i + 1);
    o.lStar = std::move(full[i].lStar);
    o.a = full[i].a;
    o.y = full[i].y;
    o.r = full[i].r;
    if (o.r == 1) o.lEligMissing = std::vector<double>{full[i].a1c};
    records.push_back(std::move(o));
  }
  return CoarsenedDataset(simulation_schema(), std::move(records));
}

ThetaTrue true_theta(const DgpConfig& config, std::size_t oracleN, std::uint64_t seed, double maxMcse) {
  if (oracleN < 1'000'000) throw Error(ErrorCode::InvalidArgument, "true_theta needs oracleN >= 1e6");
  config.validate();
  const auto m = compile(config);
  Sampler s(seed);
  KahanSum sum, sq;
  std::size_t kept = 0, drawn = 0, target = oracleN;
  while (true) {
    for (; drawn < target; ++drawn) {
      const auto l = draw_lstar(s, config.lStar);
      const int a = s.bernoulli(expit(m.pi(l, 0, 0.0))) ? 1 : 0;
      const double a1c = draw_a1c(s, config, m.lambda(l, a, 0.0));
      if (a != 1 || !(a1c >= config.eligThreshold)) continue;
      const double d = m.mu(l, 1, a1c) - m.mu(l, 0, a1c);
      sum.add(d);
      sq.add(d * d);
      ++kept;
    }
    if (kept < 2) throw Error(ErrorCode::ZeroMass, "no treated eligible draws");
    const double k = static_cast<double>(kept);
    const double mean = sum.value() / k;
    const double var = std::max(0.0, (sq.value() - k * mean * mean) / (k - 1.0));
    const double mcse = std::sqrt(var / k);
    if (mcse <= maxMcse) return {mean, mcse, drawn};
    target *= 2;
  }
}

}  // namespace attelig::dgp
