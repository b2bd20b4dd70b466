#include "attelig_cli/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "attelig/config.hpp"
#include "attelig/error.hpp"
#include "attelig/oracle.hpp"

#ifndef ATTELIG_FIXTURES_DIR
#define ATTELIG_FIXTURES_DIR "fixtures/oracle"
#endif

namespace attelig::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f << text;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string num(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string estimate_table(const std::vector<EstimateReport>& reports) {
  std::string t = "Estimator     theta_hat          SE        CI lo        CI hi   n_complete\n";
  t += std::string(74, '-') + "\n";
  for (const auto& r : reports) {
    char line[160];
    std::snprintf(line, sizeof line, "%-9s %13s %11s %12s %12s %12zu\n", std::string(to_string(r.estimator)).c_str(),
                  num(r.thetaHat).c_str(), r.se ? num(*r.se).c_str() : "-", r.ciLo ? num(*r.ciLo).c_str() : "-",
                  r.ciHi ? num(*r.ciHi).c_str() : "-", r.nComplete);
    t += line;
  }
  return t;
}

/// Parses a config file; every failure maps to the config exit code.
template <class Run, class Parse>
std::optional<Run> load_run(const fs::path& config, Parse parse, std::ostream& err) {
  try {
    const auto j = config::load_json(config);
    return parse(j, fs::absolute(config).parent_path());
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
  }
  return std::nullopt;
}

}  // namespace

fs::path default_fixtures_dir() { return fs::path(ATTELIG_FIXTURES_DIR); }

int cmd_estimate(const fs::path& config, std::ostream& out, std::ostream& err) {
  auto run = load_run<config::EstimateRun>(config, config::parse_estimate_run, err);
  if (!run) return kConfigError;

  std::optional<CoarsenedDataset> data;
  try {
    data = load_csv(run->csv, run->schema);
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }

  std::vector<EstimateReport> reports;
  try {
    reports = run_estimators(*data, run->rule, run->estimation);
  } catch (const std::exception& e) {
    err << "estimation error: " << e.what() << "\n";
    return kEstimationError;
  }

  try {
    fs::create_directories(run->output.dir);
    for (const auto& r : reports) {
      write_text(run->output.dir / (lower(to_string(r.estimator)) + ".json"), r.to_json().dump(2) + "\n");
    }
    const auto table = estimate_table(reports);
    write_text(run->output.dir / "estimates.txt", table);
    if (run->output.table) out << table;
  } catch (const std::exception& e) {
    err << "output error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}

int cmd_simulate(const fs::path& config, std::ostream& out, std::ostream& err) {
  auto run = load_run<config::SimulateRun>(config, config::parse_simulate_run, err);
  if (!run) return kConfigError;

  std::optional<sim::SimulationSummary> summary;
  try {
    summary = sim::run_simulation(run->simulation);
  } catch (const std::exception& e) {
    err << "simulation error: " << e.what() << "\n";
    return kEstimationError;
  }

  try {
    fs::create_directories(run->output.dir);
    write_text(run->output.dir / "simulation.json", summary->to_json().dump(2) + "\n");
    const auto table = summary->to_table();
    write_text(run->output.dir / "simulation.txt", table);
    if (run->output.table) out << table;
  } catch (const std::exception& e) {
    err << "output error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}

int cmd_oracle_check(const fs::path& fixtures, const std::optional<fs::path>& jsonOut, std::ostream& out,
                     std::ostream& err) {
  if (!fs::is_directory(fixtures)) {
    err << "config error: fixtures directory not found: " << fixtures.string() << "\n";
    return kConfigError;
  }
  auto list = [](const fs::path& dir) {
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    return files;
  };

  nlohmann::json report = nlohmann::json::array();
  bool violation = false;
  auto check_dir = [&](const fs::path& dir, bool negative) -> int {
    for (const auto& path : list(dir)) {
      oracle::Fixture fx;
      try {
        fx = oracle::load_fixture(path);
      } catch (const std::exception& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
      }
      std::vector<oracle::IdentityCheck> checks;
      try {
        checks = oracle::run_identity_checks(fx.dist, fx.rule);
      } catch (const std::exception& e) {
        err << "data error: " << path.filename().string() << ": " << e.what() << "\n";
        return kDataError;
      }
      const std::string label = (negative ? "negative/" : "") + path.filename().string();
      bool all = true;
      nlohmann::json entry{{"fixture", label}, {"negative", negative}, {"identities", nlohmann::json::array()}};
      for (const auto& c : checks) {
        all = all && c.passed;
        out << label << "  " << c.identity << "  max discrepancy " << num(c.discrepancy, "%.3e") << " (tol "
            << num(c.tolerance, "%.0e") << ")  " << (c.passed ? "ok" : (negative ? "violated" : "FAILED")) << "\n";
        entry["identities"].push_back(
            {{"identity", c.identity}, {"discrepancy", c.discrepancy}, {"tolerance", c.tolerance}, {"passed", c.passed}});
      }
      if (negative) {
        entry["status"] = all ? "unexpected-pass" : "expected-failure";
        out << label << "  " << (all ? "UNEXPECTED PASS" : "expected failure") << "\n";
        if (all) {
          err << "identity violation: negative fixture " << label << " satisfied every identity\n";
          violation = true;
        }
      } else {
        entry["status"] = all ? "pass" : "fail";
        if (!all) {
          for (const auto& c : checks) {
            if (!c.passed) err << "identity violation: " << c.identity << " on " << label << "\n";
          }
          violation = true;
        }
      }
      report.push_back(std::move(entry));
    }
    return kOk;
  };

  if (list(fixtures).empty()) {
    err << "config error: no fixtures in " << fixtures.string() << "\n";
    return kConfigError;
  }
  if (int rc = check_dir(fixtures, false); rc != kOk) return rc;
  if (int rc = check_dir(fixtures / "negative", true); rc != kOk) return rc;

  if (jsonOut) {
    try {
      if (jsonOut->has_parent_path()) fs::create_directories(jsonOut->parent_path());
      write_text(*jsonOut, report.dump(2) + "\n");
    } catch (const std::exception& e) {
      err << "output error: " << e.what() << "\n";
      return kConfigError;
    }
  }
  return violation ? kIdentityViolation : kOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Estimators of the treatment effect among the treated and eligible, with missing eligibility data",
               "attelig"};
  app.require_subcommand(1);

  std::string config;
  auto* estimate = app.add_subcommand("estimate", "Run the configured estimators on a CSV dataset");
  estimate->add_option("--config", config, "JSON run config")->required();
  auto* simulate = app.add_subcommand("simulate", "Run the simulation study");
  simulate->add_option("--config", config, "JSON run config")->required();
  std::string fixtures = default_fixtures_dir().string();
  std::string jsonOut;
  auto* check = app.add_subcommand("oracle-check", "Verify the enumeration identities on fixture distributions");
  check->add_option("--fixtures", fixtures, "Fixture directory");
  check->add_option("--json", jsonOut, "Write per-identity results to this file");

  std::vector<std::string> rest(args.rbegin(), args.rend());
  if (!rest.empty()) rest.pop_back();  // argv[0]
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << e.what() << "\n" << app.help();
    return kUsage;
  }

  if (*estimate) return cmd_estimate(config, out, err);
  if (*simulate) return cmd_simulate(config, out, err);
  return cmd_oracle_check(fixtures, jsonOut.empty() ? std::nullopt : std::optional<fs::path>(jsonOut), out, err);
}

}  // namespace attelig::cli
