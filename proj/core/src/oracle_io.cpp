#include <fstream>
#include <sstream>

#include "attelig/error.hpp"
#include "attelig/oracle.hpp"

namespace attelig::oracle {

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, "fixture line " + std::to_string(line) + ": " + what);
}

double to_number(const std::string& tok, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) parse_fail(line, "bad number '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    parse_fail(line, "bad number '" + tok + "'");
  }
}

int to_binary(const std::string& tok, std::size_t line) {
  if (tok == "0") return 0;
  if (tok == "1") return 1;
  parse_fail(line, "expected 0 or 1, got '" + tok + "'");
}

}  // namespace

Fixture parse_fixture(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineNo = 0;
  std::string name;
  std::optional<std::size_t> dim;
  double epsilon = 0.0;
  std::optional<EligibilityRule> rule;
  bool inAtoms = false;
  std::vector<Atom> atoms;
  while (std::getline(in, raw)) {
    ++lineNo;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (inAtoms) {
      if (!dim) parse_fail(lineNo, "lstar_dim must precede atoms");
      if (tok.size() != *dim + 5) {
        parse_fail(lineNo, "expected " + std::to_string(*dim + 5) + " fields, got " + std::to_string(tok.size()));
      }
      Atom at;
      for (std::size_t j = 0; j < *dim; ++j) at.lStar.push_back(to_number(tok[j], lineNo));
      at.a = to_binary(tok[*dim], lineNo);
      at.r = to_binary(tok[*dim + 1], lineNo);
      at.lElig = to_number(tok[*dim + 2], lineNo);
      at.y = to_number(tok[*dim + 3], lineNo);
      at.prob = to_number(tok[*dim + 4], lineNo);
      atoms.push_back(std::move(at));
      continue;
    }
    const auto& kw = tok[0];
    if (kw == "atoms") {
      inAtoms = true;
    } else if (kw == "name" && tok.size() == 2) {
      name = tok[1];
    } else if (kw == "lstar_dim" && tok.size() == 2) {
      const double d = to_number(tok[1], lineNo);
      if (d < 1 || d != static_cast<double>(static_cast<std::size_t>(d))) parse_fail(lineNo, "bad lstar_dim");
      dim = static_cast<std::size_t>(d);
    } else if (kw == "epsilon" && tok.size() == 2) {
      epsilon = to_number(tok[1], lineNo);
    } else if (kw == "rule" && tok.size() == 4) {
      try {
        rule = EligibilityRule::threshold(tok[1], parse_comparator(tok[2]), to_number(tok[3], lineNo));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::ParseError) throw;
        parse_fail(lineNo, e.message());
      }
    } else {
      parse_fail(lineNo, "unrecognised directive '" + kw + "'");
    }
  }
  if (!inAtoms) throw Error(ErrorCode::ParseError, "fixture has no atoms section");
  Fixture fx{DiscreteJointDistribution(std::move(atoms), epsilon, name), rule.value_or(default_oracle_rule())};
  validate_rule(fx.rule, oracle_schema(fx.dist.lstar_dim()));
  return fx;
}

Fixture load_fixture(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open fixture " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_fixture(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.filename().string() + ": " + e.message());
  }
}

std::string format_fixture(const Fixture& fx) {
  std::ostringstream out;
  if (!fx.dist.name().empty()) out << "name " << fx.dist.name() << "\n";
  out << "lstar_dim " << fx.dist.lstar_dim() << "\n";
  out << "epsilon " << format_double(fx.dist.epsilon()) << "\n";
  if (fx.rule.is_threshold()) {
    const auto& t = fx.rule.as_threshold();
    out << "rule " << t.covariate << " " << to_string(t.op) << " " << format_double(t.cutoff) << "\n";
  }
  out << "atoms\n# ";
  for (std::size_t j = 0; j < fx.dist.lstar_dim(); ++j) out << "l" << j + 1 << " ";
  out << "a r l_elig y prob\n";
  for (const auto& at : fx.dist.atoms()) {
    for (double v : at.lStar) out << format_double(v) << " ";
    out << at.a << " " << at.r << " " << format_double(at.lElig) << " " << format_double(at.y) << " "
        << format_double(at.prob) << "\n";
  }
  return out.str();
}

}  // namespace attelig::oracle
