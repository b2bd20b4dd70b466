#include "attelig/simulation.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include "attelig/error.hpp"
#include "attelig/stats.hpp"

namespace attelig::sim {

namespace {

struct Outcome {
  double theta = 0.0;
  std::optional<double> se, lo, hi;
};

struct RepResult {
  // Indexed like the summary rows; nullopt when the variant failed.
  std::vector<std::optional<Outcome>> outcomes;
  std::vector<ReplicationFailure> failures;
};

struct RowKey {
  std::size_t variant;
  EstimatorKind kind;
};

std::vector<RowKey> row_keys(const std::vector<Variant>& variants) {
  std::vector<RowKey> keys;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (auto k : {EstimatorKind::CC, EstimatorKind::IWOR, EstimatorKind::IF, EstimatorKind::EIF}) {
      if (variants[v].estimation.suite.count(k)) keys.push_back({v, k});
    }
  }
  return keys;
}

std::string row_label(const Variant& v, EstimatorKind k) {
  if (v.estimation.suite.size() == 1) return v.label;
  return std::string(to_string(k)) + " " + v.label;
}

learners::LearnerSpec glm_for(NuisanceName n) {
  return task_of(n) == learners::TaskKind::Probability ? learners::LearnerSpec::logistic() : learners::LearnerSpec::ols();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

int resolve_threads(int requested) {
  if (const char* env = std::getenv("ATTELIG_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

NuisanceModelSpec true_mu_spec() {
  NuisanceModelSpec s;
  s.learner = learners::LearnerSpec::ols();
  s.interactions = {{"a", "baseline_a1c"},
                    {"gender", "baseline_a1c"},
                    {"gender", "baseline_bmi"},
                    {"smoking_status", "a"},
                    {"site", "a"}};
  return s;
}

NuisanceModelSpec true_eta_spec() {
  NuisanceModelSpec s;
  s.learner = learners::LearnerSpec::logistic();
  return s;
}

NuisanceSpec stack_nuisance_spec() {
  NuisanceSpec spec;
  spec.mu0Strategy = Mu0Strategy::FullInteractions;
  spec.restrictMuUToEligible = true;
  for (auto n : {NuisanceName::Eta, NuisanceName::U, NuisanceName::Mu0, NuisanceName::Eps1, NuisanceName::Xi,
                 NuisanceName::Gamma, NuisanceName::Chi, NuisanceName::Nu, NuisanceName::Omega1}) {
    auto forest = learners::LearnerSpec::forest(50, 1.0, 10);
    forest.hyper["sampleFraction"] = 0.632;
    forest.hyper["replace"] = 0;
    NuisanceModelSpec m;
    m.learner = learners::LearnerSpec::stack({glm_for(n), forest}, 3);
    spec.models[n] = m;
  }
  return spec;
}

std::vector<Variant> default_variants(int folds, int bootstrapB) {
  std::vector<Variant> out;
  auto parametric = [&](std::set<EstimatorKind> suite, NuisanceModelSpec eta) {
    EstimationConfig c;
    c.suite = std::move(suite);
    c.parametricSpec.models[NuisanceName::Mu0] = true_mu_spec();
    c.parametricSpec.models[NuisanceName::Eta] = std::move(eta);
    c.bootstrapB = bootstrapB;
    c.folds = folds;
    return c;
  };
  out.push_back({"CC (mu true)", parametric({EstimatorKind::CC}, true_eta_spec())});
  out.push_back({"IWOR (mu, eta true)", parametric({EstimatorKind::IWOR}, true_eta_spec())});
  NuisanceModelSpec intercept = true_eta_spec();
  intercept.interceptOnly = true;
  out.push_back({"IWOR (mu true, eta intercept-only)", parametric({EstimatorKind::IWOR}, intercept)});
  EstimationConfig ml;
  ml.suite = {EstimatorKind::IF, EstimatorKind::EIF};
  ml.crossfitSpec = stack_nuisance_spec();
  ml.folds = folds;
  ml.bootstrapB = 0;
  out.push_back({"(stack)", ml});
  return out;
}

SimulationSummary run_simulation(const SimulationConfig& config) {
  if (config.nReps < 1) throw Error(ErrorCode::InvalidConfig, "n_reps must be >= 1");
  if (config.variants.empty()) throw Error(ErrorCode::InvalidConfig, "simulation needs at least one variant");
  config.dgp.validate();

  SimulationSummary summary;
  summary.nReps = config.nReps;
  summary.n = config.dgp.n;
  summary.configEcho = config.configEcho;
  if (config.thetaTrue) {
    summary.thetaTrue = *config.thetaTrue;
    summary.oracleN = config.oracleN;
    summary.thetaPinned = true;
  } else {
    const auto t = dgp::true_theta(config.dgp, config.oracleN);
    summary.thetaTrue = t.value;
    summary.oracleN = t.oracleN;
  }

  const auto keys = row_keys(config.variants);
  const auto rule = dgp::simulation_rule(config.dgp.eligThreshold);
  std::vector<RepResult> results(static_cast<std::size_t>(config.nReps));

  auto run_one = [&](int rep) {
    RepResult res;
    res.outcomes.assign(keys.size(), std::nullopt);
    dgp::DgpConfig d = config.dgp;
    d.seed = derive_seed(config.dgp.seed, 2 * static_cast<std::uint64_t>(rep));
    const std::uint64_t est_seed = derive_seed(config.dgp.seed, 2 * static_cast<std::uint64_t>(rep) + 1);
    try {
      const auto data = dgp::simulate_dataset(d);
      for (std::size_t v = 0; v < config.variants.size(); ++v) {
        EstimationConfig ec = config.variants[v].estimation;
        ec.seed = derive_seed(est_seed, v);
        try {
          const auto reports = run_estimators(data, rule, ec);
          for (const auto& r : reports) {
            for (std::size_t k = 0; k < keys.size(); ++k) {
              if (keys[k].variant == v && keys[k].kind == r.estimator) {
                res.outcomes[k] = Outcome{r.thetaHat, r.se, r.ciLo, r.ciHi};
              }
            }
          }
        } catch (const Error& e) {
          res.failures.push_back({rep, config.variants[v].label, e.what()});
        }
      }
    } catch (const Error& e) {
      res.failures.push_back({rep, "(data generation)", e.what()});
    }
    results[static_cast<std::size_t>(rep)] = std::move(res);
  };

  const int threads = std::min(resolve_threads(config.threads), config.nReps);
  if (threads <= 1) {
    for (int rep = 0; rep < config.nReps; ++rep) run_one(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int rep = next++; rep < config.nReps; rep = next++) run_one(rep);
      });
    }
    for (auto& th : pool) th.join();
  }

  int failed_reps = 0;
  for (const auto& r : results) {
    if (!r.failures.empty()) ++failed_reps;
    for (const auto& f : r.failures) summary.failures.push_back(f);
  }

  summary.estimates.resize(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    EstimatorSummary row;
    row.label = row_label(config.variants[keys[k].variant], keys[k].kind);
    row.estimator = keys[k].kind;
    std::vector<double> thetas, ses;
    int covered = 0;
    bool all_ci = true;
    for (const auto& r : results) {
      const auto& o = r.outcomes[k];
      if (!o) {
        ++row.nFailed;
        continue;
      }
      thetas.push_back(o->theta);
      if (o->se && o->lo && o->hi) {
        ses.push_back(*o->se);
        if (*o->lo <= summary.thetaTrue && summary.thetaTrue <= *o->hi) ++covered;
      } else {
        all_ci = false;
      }
    }
    row.nOk = static_cast<int>(thetas.size());
    if (row.nOk > 0) {
      row.meanEstimate = mean(thetas);
      row.percentBias = 100.0 * (row.meanEstimate - summary.thetaTrue) / summary.thetaTrue;
      if (row.nOk >= 2) row.sd = sample_sd(thetas);
      if (all_ci) {
        row.coverage = static_cast<double>(covered) / row.nOk;
        row.meanSe = mean(ses);
      }
    }
    summary.estimates[k] = std::move(thetas);
    summary.rows.push_back(std::move(row));
  }

  if (failed_reps * 50 > config.nReps) {
    throw Error(ErrorCode::NonConvergence, std::to_string(failed_reps) + " of " + std::to_string(config.nReps) +
                                               " replications failed; first: " + summary.failures.front().message);
  }
  return summary;
}

nlohmann::json SimulationSummary::to_json() const {
  nlohmann::json j;
  j["theta_true"] = thetaTrue;
  j["oracle_n"] = oracleN;
  j["theta_pinned"] = thetaPinned;
  j["n_reps"] = nReps;
  j["n"] = n;
  j["rows"] = nlohmann::json::array();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    nlohmann::json row;
    row["label"] = r.label;
    row["estimator"] = std::string(to_string(r.estimator));
    row["n_ok"] = r.nOk;
    row["n_failed"] = r.nFailed;
    row["mean_estimate"] = r.meanEstimate;
    row["percent_bias"] = r.percentBias;
    row["sd"] = r.sd ? nlohmann::json(*r.sd) : nlohmann::json(nullptr);
    row["coverage"] = r.coverage ? nlohmann::json(*r.coverage) : nlohmann::json(nullptr);
    row["mean_se"] = r.meanSe ? nlohmann::json(*r.meanSe) : nlohmann::json(nullptr);
    row["estimates"] = k < estimates.size() ? estimates[k] : std::vector<double>{};
    j["rows"].push_back(std::move(row));
  }
  j["failures"] = nlohmann::json::array();
  for (const auto& f : failures) {
    j["failures"].push_back({{"replication", f.replication}, {"variant", f.variant}, {"message", f.message}});
  }
  j["config_echo"] = configEcho;
  return j;
}

std::string SimulationSummary::to_table() const {
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::ostringstream out;
  auto pad = [](std::string s, std::size_t w, bool left) {
    if (s.size() >= w) return s;
    return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
  };
  out << "theta_true = " << format_double(thetaTrue) << " (oracle_n = " << oracleN
      << (thetaPinned ? ", pinned" : "") << "), n = " << n << ", replications = " << nReps << "\n";
  out << pad("Estimator", width, true) << "  " << pad("%-Bias", 8, false) << "  " << pad("SD", 8, false) << "  "
      << pad("Coverage", 8, false) << "  " << pad("Mean SE", 8, false) << "  " << pad("Failed", 6, false) << "\n";
  out << std::string(width + 2 + 8 + 2 + 8 + 2 + 8 + 2 + 8 + 2 + 6, '-') << "\n";
  for (const auto& r : rows) {
    out << pad(r.label, width, true) << "  " << pad(fixed(r.percentBias, 1), 8, false) << "  "
        << pad(r.sd ? fixed(*r.sd, 4) : "-", 8, false) << "  "
        << pad(r.coverage ? fixed(100.0 * *r.coverage, 1) : "-", 8, false) << "  "
        << pad(r.meanSe ? fixed(*r.meanSe, 4) : "-", 8, false) << "  " << pad(std::to_string(r.nFailed), 6, false)
        << "\n";
  }
  return out.str();
}

}  // namespace attelig::sim
