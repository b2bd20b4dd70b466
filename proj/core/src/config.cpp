#include "attelig/config.hpp"

#include <fstream>
#include <sstream>

#include "attelig/error.hpp"

namespace attelig::config {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

const json& member(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) bad(where + ": missing '" + key + "'");
  return j.at(key);
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(where + "." + key + " has the wrong type");
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) bad(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) bad(where + ": unknown key '" + k + "'");
  }
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  return p.is_absolute() ? p : base / p;
}

OutputOptions parse_output(const json& j, const std::filesystem::path& base) {
  OutputOptions o;
  if (!j.contains("output")) {
    o.dir = base / o.dir;
    return o;
  }
  const auto& out = j.at("output");
  check_keys(out, {"dir", "table"}, "output");
  o.dir = resolve(get_or<std::string>(out, "dir", o.dir.string(), "output"), base);
  o.table = get_or<bool>(out, "table", true, "output");
  return o;
}

dgp::Coefficients parse_coefficients(const json& j, const std::string& where) {
  dgp::Coefficients c;
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (!v.is_number()) bad(where + "." + k + " must be a number");
      c.emplace_back(k, v.get<double>());
    }
  } else if (j.is_array()) {
    for (const auto& e : j) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number()) {
        bad(where + " entries must be [term, coefficient]");
      }
      c.emplace_back(e[0].get<std::string>(), e[1].get<double>());
    }
  } else {
    bad(where + " must be an object or an array of [term, coefficient]");
  }
  return c;
}

dgp::TruncatedNormal parse_tn(const json& j, dgp::TruncatedNormal d, const std::string& where) {
  check_keys(j, {"mean", "sd", "lo", "hi"}, where);
  d.mean = get_or<double>(j, "mean", d.mean, where);
  d.sd = get_or<double>(j, "sd", d.sd, where);
  d.lo = get_or<double>(j, "lo", d.lo, where);
  d.hi = get_or<double>(j, "hi", d.hi, where);
  return d;
}

int parse_threads(const json& j) {
  if (get_or<bool>(j, "serial", false, "config")) return 1;
  const int t = get_or<int>(j, "threads", 0, "config");
  if (t < 0) bad("threads must be >= 0");
  return t;
}

struct Crossfit {
  int k = 2;
  std::uint64_t seed = 1;
};

Crossfit parse_crossfit(const json& j) {
  Crossfit c;
  if (!j.contains("crossfit")) return c;
  const auto& cf = j.at("crossfit");
  check_keys(cf, {"k", "seed"}, "crossfit");
  c.k = get_or<int>(cf, "k", 2, "crossfit");
  c.seed = get_or<std::uint64_t>(cf, "seed", 1, "crossfit");
  if (c.k < 2) bad("crossfit.k must be >= 2");
  return c;
}

struct Bootstrap {
  int B = 200;
  double level = 0.95;
};

Bootstrap parse_bootstrap(const json& j, int defaultB) {
  Bootstrap b;
  b.B = defaultB;
  if (!j.contains("bootstrap")) return b;
  const auto& bs = j.at("bootstrap");
  check_keys(bs, {"B", "level"}, "bootstrap");
  b.B = get_or<int>(bs, "B", defaultB, "bootstrap");
  b.level = get_or<double>(bs, "level", 0.95, "bootstrap");
  if (b.B != 0 && b.B < 50) bad("bootstrap.B must be 0 or >= 50");
  if (!(b.level > 0.0 && b.level < 1.0)) bad("bootstrap.level must lie in (0, 1)");
  return b;
}

/// Checks that every nuisance the requested estimators need has a model.
void require_models(const EstimationConfig& ec) {
  if (ec.suite.count(EstimatorKind::EIF)) ec.crossfitSpec.require(nuisances_for_eif());
  if (ec.suite.count(EstimatorKind::IF)) ec.crossfitSpec.require(nuisances_for_if());
  if (ec.suite.count(EstimatorKind::CC)) ec.parametricSpec.require({NuisanceName::Mu0});
  if (ec.suite.count(EstimatorKind::IWOR)) ec.parametricSpec.require({NuisanceName::Mu0, NuisanceName::Eta});
}

/// Estimators, nuisance, parametric, crossfit and bootstrap sections shared
/// by `estimate` configs and simulation variants.
EstimationConfig parse_estimation(const json& j, int defaultB) {
  EstimationConfig ec;
  ec.suite = parse_estimators(member(j, "estimators", "config"));
  if (j.contains("nuisance")) ec.crossfitSpec = parse_nuisance_spec(j.at("nuisance"));
  ec.parametricSpec = j.contains("parametric") ? parse_nuisance_spec(j.at("parametric")) : ec.crossfitSpec;
  const auto cf = parse_crossfit(j);
  ec.folds = cf.k;
  ec.seed = cf.seed;
  const auto bs = parse_bootstrap(j, defaultB);
  ec.bootstrapB = bs.B;
  ec.level = bs.level;
  require_models(ec);
  return ec;
}

}  // namespace

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    auto j = json::parse(ss.str());
    if (!j.is_object()) bad("config root must be an object");
    return j;
  } catch (const json::parse_error& e) {
    bad(path.string() + ": " + e.what());
  }
}

CovariateSchema parse_schema(const json& j) {
  check_keys(j, {"covariates"}, "schema");
  const auto& list = member(j, "covariates", "schema");
  if (!list.is_array() || list.empty()) bad("schema.covariates must be a non-empty array");
  std::vector<Covariate> cov;
  for (const auto& c : list) {
    check_keys(c, {"name", "kind", "levels", "partition"}, "schema.covariates[]");
    Covariate v;
    v.name = get_or<std::string>(c, "name", "", "schema.covariates[]");
    if (v.name.empty()) bad("schema covariate needs a name");
    const auto kind = get_or<std::string>(c, "kind", "numeric", v.name);
    if (kind == "numeric") {
      v.kind = CovariateKind::Numeric;
    } else if (kind == "categorical") {
      v.kind = CovariateKind::Categorical;
      v.levels = get_or<std::vector<std::string>>(c, "levels", {}, v.name);
    } else {
      bad(v.name + ": kind must be numeric or categorical");
    }
    const auto part = get_or<std::string>(c, "partition", "fully_observed", v.name);
    if (part == "fully_observed") {
      v.partition = Partition::FullyObserved;
    } else if (part == "eligibility_missing") {
      v.partition = Partition::EligibilityMissing;
    } else {
      bad(v.name + ": partition must be fully_observed or eligibility_missing");
    }
    cov.push_back(std::move(v));
  }
  try {
    return CovariateSchema(std::move(cov));
  } catch (const Error& e) {
    bad("schema: " + e.message());
  }
}

EligibilityRule parse_rule(const json& j) {
  if (j.is_object() && j.contains("all_of")) {
    check_keys(j, {"all_of"}, "rule");
    if (!j.at("all_of").is_array() || j.at("all_of").empty()) bad("rule.all_of must be a non-empty array");
    std::vector<EligibilityRule> kids;
    for (const auto& k : j.at("all_of")) kids.push_back(parse_rule(k));
    return EligibilityRule::all_of(std::move(kids));
  }
  check_keys(j, {"covariate", "op", "cutoff", "level"}, "rule");
  ThresholdRule t;
  t.covariate = get_or<std::string>(j, "covariate", "", "rule");
  if (t.covariate.empty()) bad("rule needs a covariate");
  t.op = parse_comparator(get_or<std::string>(j, "op", ">=", "rule"));
  if (j.contains("level")) {
    t.level = get_or<std::string>(j, "level", "", "rule");
  } else {
    if (!j.contains("cutoff") || !j.at("cutoff").is_number()) bad("rule needs a numeric cutoff or a level");
    t.cutoff = j.at("cutoff").get<double>();
  }
  return EligibilityRule(std::move(t));
}

learners::LearnerSpec parse_learner(const json& j, learners::TaskKind task) {
  std::string kind;
  const json* params = nullptr;
  const json* members = nullptr;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else {
    check_keys(j, {"kind", "params", "members"}, "learner");
    kind = get_or<std::string>(j, "kind", "", "learner");
    if (j.contains("params")) params = &j.at("params");
    if (j.contains("members")) members = &j.at("members");
  }
  if (kind == "glm") kind = task == learners::TaskKind::Probability ? "logistic" : "ols";
  learners::LearnerSpec spec;
  try {
    spec.kind = learners::parse_learner_kind(kind);
  } catch (const Error& e) {
    bad("learner: " + e.message());
  }
  if (params) {
    if (!params->is_object()) bad("learner params must be an object");
    for (const auto& [k, v] : params->items()) {
      if (v.is_boolean()) {
        spec.hyper[k] = v.get<bool>() ? 1.0 : 0.0;
      } else if (v.is_number()) {
        spec.hyper[k] = v.get<double>();
      } else {
        bad("learner param '" + k + "' must be numeric");
      }
    }
  }
  if (members) {
    if (!members->is_array()) bad("learner members must be an array");
    for (const auto& m : *members) spec.members.push_back(parse_learner(m, task));
  }
  if (spec.kind == learners::LearnerKind::Stack && !spec.hyper.count("cvFolds")) spec.hyper["cvFolds"] = 5;
  if (spec.kind == learners::LearnerKind::Logistic && task != learners::TaskKind::Probability) {
    bad("logistic learner used for a regression nuisance");
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    bad("learner: " + e.message());
  }
  return spec;
}

NuisanceSpec parse_nuisance_spec(const json& j) {
  check_keys(j, {"mu0_strategy", "restrict_mu_u_to_eligible", "clip", "ridge_fallback", "single_class_fallback",
                 "models"},
             "nuisance");
  NuisanceSpec s;
  try {
    s.mu0Strategy = parse_mu0_strategy(get_or<std::string>(j, "mu0_strategy", "single_model", "nuisance"));
  } catch (const Error& e) {
    bad(e.message());
  }
  s.restrictMuUToEligible = get_or<bool>(j, "restrict_mu_u_to_eligible", true, "nuisance");
  s.ridgeFallback = get_or<bool>(j, "ridge_fallback", true, "nuisance");
  s.singleClassFallback = get_or<bool>(j, "single_class_fallback", true, "nuisance");
  if (j.contains("clip")) {
    const auto c = get_or<std::vector<double>>(j, "clip", {}, "nuisance");
    if (c.size() != 2 || !(c[0] > 0.0 && c[0] < c[1] && c[1] <= 1.0)) {
      bad("nuisance.clip must be [lo, hi] with 0 < lo < hi <= 1");
    }
    s.clipLo = c[0];
    s.clipHi = c[1];
  }
  if (j.contains("models")) {
    const auto& models = j.at("models");
    if (!models.is_object()) bad("nuisance.models must be an object");
    for (const auto& [name, m] : models.items()) {
      NuisanceName nm;
      try {
        nm = parse_nuisance_name(name);
      } catch (const Error& e) {
        bad("nuisance.models: " + e.message());
      }
      const std::string where = "nuisance.models." + name;
      check_keys(m, {"learner", "covariates", "interactions", "intercept_only"}, where);
      NuisanceModelSpec ms;
      ms.learner = parse_learner(member(m, "learner", where), task_of(nm));
      if (m.contains("covariates")) ms.covariates = get_or<std::vector<std::string>>(m, "covariates", {}, where);
      if (m.contains("interactions")) {
        for (const auto& pair : m.at("interactions")) {
          if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
            bad(where + ".interactions entries must be [name, name]");
          }
          ms.interactions.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
        }
      }
      ms.interceptOnly = get_or<bool>(m, "intercept_only", false, where);
      s.models[nm] = std::move(ms);
    }
  }
  return s;
}

std::set<EstimatorKind> parse_estimators(const json& j) {
  if (!j.is_array() || j.empty()) bad("estimators must be a non-empty array");
  std::set<EstimatorKind> out;
  for (const auto& e : j) {
    if (!e.is_string()) bad("estimators entries must be strings");
    try {
      out.insert(parse_estimator_kind(e.get<std::string>()));
    } catch (const Error& err) {
      bad(err.message());
    }
  }
  return out;
}

dgp::DgpConfig parse_dgp(const json& j) {
  auto c = dgp::DgpConfig::published();
  if (j.is_null()) return c;
  check_keys(j,
             {"n", "seed", "alpha_lambda", "sigma_y2", "elig_threshold", "l_star", "beta_pi", "beta_eta",
              "beta_lambda", "beta_mu"},
             "dgp");
  c.n = get_or<std::size_t>(j, "n", c.n, "dgp");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, "dgp");
  c.alphaLambda = get_or<double>(j, "alpha_lambda", c.alphaLambda, "dgp");
  c.sigmaY2 = get_or<double>(j, "sigma_y2", c.sigmaY2, "dgp");
  c.eligThreshold = get_or<double>(j, "elig_threshold", c.eligThreshold, "dgp");
  if (j.contains("beta_pi")) c.betaPi = parse_coefficients(j.at("beta_pi"), "dgp.beta_pi");
  if (j.contains("beta_eta")) c.betaEta = parse_coefficients(j.at("beta_eta"), "dgp.beta_eta");
  if (j.contains("beta_lambda")) c.betaLambda = parse_coefficients(j.at("beta_lambda"), "dgp.beta_lambda");
  if (j.contains("beta_mu")) c.betaMu = parse_coefficients(j.at("beta_mu"), "dgp.beta_mu");
  if (j.contains("l_star")) {
    const auto& l = j.at("l_star");
    check_keys(l, {"site", "gender", "race", "smoking", "baseline_bmi", "baseline_age", "egfr"}, "dgp.l_star");
    auto& s = c.lStar;
    s.site = get_or<std::vector<double>>(l, "site", s.site, "dgp.l_star");
    s.gender = get_or<double>(l, "gender", s.gender, "dgp.l_star");
    s.race = get_or<double>(l, "race", s.race, "dgp.l_star");
    s.smoking = get_or<std::vector<double>>(l, "smoking", s.smoking, "dgp.l_star");
    if (l.contains("baseline_bmi")) s.baselineBmi = parse_tn(l.at("baseline_bmi"), s.baselineBmi, "baseline_bmi");
    if (l.contains("baseline_age")) s.baselineAge = parse_tn(l.at("baseline_age"), s.baselineAge, "baseline_age");
    if (l.contains("egfr")) s.eGFR = parse_tn(l.at("egfr"), s.eGFR, "egfr");
  }
  try {
    c.validate();
  } catch (const Error& e) {
    bad("dgp: " + e.message());
  }
  return c;
}

bool same_law(const dgp::DgpConfig& a, const dgp::DgpConfig& b) {
  auto tn = [](const dgp::TruncatedNormal& x, const dgp::TruncatedNormal& y) {
    return x.mean == y.mean && x.sd == y.sd && x.lo == y.lo && x.hi == y.hi;
  };
  const auto& s = a.lStar;
  const auto& t = b.lStar;
  return a.betaPi == b.betaPi && a.betaEta == b.betaEta && a.betaLambda == b.betaLambda && a.betaMu == b.betaMu &&
         a.alphaLambda == b.alphaLambda && a.sigmaY2 == b.sigmaY2 && a.eligThreshold == b.eligThreshold &&
         s.site == t.site && s.gender == t.gender && s.race == t.race && s.smoking == t.smoking &&
         tn(s.baselineBmi, t.baselineBmi) && tn(s.baselineAge, t.baselineAge) && tn(s.eGFR, t.eGFR);
}

EstimateRun parse_estimate_run(const json& j, const std::filesystem::path& baseDir) {
  check_keys(j,
             {"schema", "rule", "data", "estimators", "nuisance", "parametric", "crossfit", "bootstrap", "output",
              "threads", "serial"},
             "config");
  EstimateRun run;
  run.schema = parse_schema(member(j, "schema", "config"));
  run.rule = parse_rule(member(j, "rule", "config"));
  try {
    validate_rule(run.rule, run.schema);
  } catch (const Error& e) {
    bad("rule: " + e.message());
  }
  const auto& data = member(j, "data", "config");
  check_keys(data, {"csv"}, "data");
  run.csv = resolve(get_or<std::string>(data, "csv", "", "data"), baseDir);
  if (!std::filesystem::is_regular_file(run.csv)) bad("data.csv not found: " + run.csv.string());
  run.estimation = parse_estimation(j, 200);
  run.estimation.configEcho = j;
  run.output = parse_output(j, baseDir);
  return run;
}

SimulateRun parse_simulate_run(const json& j, const std::filesystem::path& baseDir) {
  check_keys(j, {"dgp", "simulation", "output", "threads", "serial"}, "config");
  SimulateRun run;
  auto& s = run.simulation;
  s.dgp = parse_dgp(j.contains("dgp") ? j.at("dgp") : json());
  s.threads = parse_threads(j);
  s.configEcho = j;
  const json sim = j.contains("simulation") ? j.at("simulation") : json::object();
  check_keys(sim, {"n_reps", "variants", "theta_true", "oracle_n", "crossfit", "bootstrap"}, "simulation");
  s.nReps = get_or<int>(sim, "n_reps", 200, "simulation");
  if (s.nReps < 1) bad("simulation.n_reps must be >= 1");
  s.oracleN = get_or<std::size_t>(sim, "oracle_n", dgp::kPinnedOracleN, "simulation");
  if (s.oracleN < 1'000'000) bad("simulation.oracle_n must be >= 1e6");

  const json tt = sim.contains("theta_true") ? sim.at("theta_true") : json("pinned");
  if (tt.is_number()) {
    s.thetaTrue = tt.get<double>();
  } else if (tt == "pinned") {
    if (same_law(s.dgp, dgp::DgpConfig::published())) {
      s.thetaTrue = dgp::kPinnedThetaTrue;
      s.oracleN = dgp::kPinnedOracleN;
    }
  } else if (tt != "compute") {
    bad("simulation.theta_true must be a number, \"pinned\" or \"compute\"");
  }

  const json variants = sim.contains("variants") ? sim.at("variants") : json("default");
  if (variants == "default") {
    const auto cf = parse_crossfit(sim);
    const auto bs = parse_bootstrap(sim, 0);
    s.variants = sim::default_variants(cf.k, bs.B);
    for (auto& v : s.variants) v.estimation.level = bs.level;
  } else if (variants.is_array() && !variants.empty()) {
    for (const auto& v : variants) {
      check_keys(v, {"label", "estimators", "nuisance", "parametric", "crossfit", "bootstrap"},
                 "simulation.variants[]");
      sim::Variant var;
      var.label = get_or<std::string>(v, "label", "", "simulation.variants[]");
      if (var.label.empty()) bad("simulation variant needs a label");
      var.estimation = parse_estimation(v, 0);
      s.variants.push_back(std::move(var));
    }
  } else {
    bad("simulation.variants must be \"default\" or a non-empty array");
  }
  run.output = parse_output(j, baseDir);
  return run;
}

}  // namespace attelig::config
