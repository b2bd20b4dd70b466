#include "attelig/data.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "attelig/error.hpp"

namespace attelig {

CovariateSchema::CovariateSchema(std::vector<Covariate> covariates)
    : covariates_(std::move(covariates)) {
  position_.resize(covariates_.size());
  for (std::size_t i = 0; i < covariates_.size(); ++i) {
    const Covariate& c = covariates_[i];
    if (c.name.empty()) {
      throw Error(ErrorCode::InvalidConfig, "covariate with empty name");
    }
    if (c.name == "id" || c.name == "a" || c.name == "y" || c.name == "r") {
      throw Error(ErrorCode::InvalidConfig, "covariate name '" + c.name + "' is reserved");
    }
    if (!by_name_.emplace(c.name, i).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate covariate '" + c.name + "'");
    }
    if (c.kind == CovariateKind::Categorical) {
      if (c.levels.size() < 2) {
        throw Error(ErrorCode::InvalidConfig,
                    "categorical covariate '" + c.name + "' must declare at least 2 levels");
      }
      std::set<std::string> seen(c.levels.begin(), c.levels.end());
      if (seen.size() != c.levels.size()) {
        throw Error(ErrorCode::InvalidConfig,
                    "categorical covariate '" + c.name + "' declares duplicate levels");
      }
    } else if (!c.levels.empty()) {
      throw Error(ErrorCode::InvalidConfig, "numeric covariate '" + c.name + "' declares levels");
    }
    auto& block = c.partition == Partition::FullyObserved ? lstar_ : elig_;
    position_[i] = block.size();
    block.push_back(i);
  }
}

std::optional<CovariateLocation> CovariateSchema::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  const Covariate& c = covariates_[it->second];
  return CovariateLocation{&c, c.partition, position_[it->second]};
}

CovariateLocation CovariateSchema::at(std::string_view name) const {
  auto loc = find(name);
  if (!loc) throw Error(ErrorCode::UnknownCovariate, "unknown covariate '" + std::string(name) + "'");
  return *loc;
}

std::optional<std::size_t> CovariateSchema::level_index(const Covariate& c, std::string_view level) {
  auto it = std::find(c.levels.begin(), c.levels.end(), level);
  if (it == c.levels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - c.levels.begin());
}

void validate_observation(const CovariateSchema& schema, const CoarsenedObservation& obs) {
  if (obs.a != 0 && obs.a != 1) {
    throw Error(ErrorCode::ParseError, "record '" + obs.id + "': a must be 0 or 1");
  }
  if (obs.r != 0 && obs.r != 1) {
    throw Error(ErrorCode::ParseError, "record '" + obs.id + "': r must be 0 or 1");
  }
  if ((obs.r == 1) != obs.lEligMissing.has_value()) {
    throw Error(ErrorCode::InconsistentMissingness,
                "record '" + obs.id + "': r disagrees with presence of eligibility covariates");
  }
  if (obs.lStar.size() != schema.lstar_size()) {
    throw Error(ErrorCode::SchemaMismatch, "record '" + obs.id + "': wrong number of L* values");
  }
  if (obs.lEligMissing && obs.lEligMissing->size() != schema.elig_size()) {
    throw Error(ErrorCode::SchemaMismatch,
                "record '" + obs.id + "': wrong number of eligibility covariate values");
  }
}

CoarsenedDataset::CoarsenedDataset(CovariateSchema schema, std::vector<CoarsenedObservation> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  if (records_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "dataset must contain at least one record");
  }
  for (const auto& obs : records_) validate_observation(schema_, obs);
}

std::optional<double> CoarsenedDataset::value(std::size_t i, const CovariateLocation& loc) const {
  const auto& obs = records_[i];
  if (loc.partition == Partition::FullyObserved) return obs.lStar[loc.position];
  if (!obs.lEligMissing) return std::nullopt;
  return (*obs.lEligMissing)[loc.position];
}

CoarsenedDataset CoarsenedDataset::subset(std::span<const std::size_t> rows) const {
  std::vector<CoarsenedObservation> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(records_.at(i));
  return CoarsenedDataset(schema_, std::move(out));
}

// ---------------------------------------------------------------------------

EligibilityRule::EligibilityRule(ThresholdRule rule) : node_(std::move(rule)) {}
EligibilityRule::EligibilityRule(ConjunctionRule rule) : node_(std::move(rule.rules)) {}

EligibilityRule EligibilityRule::threshold(std::string covariate, Comparator op, double cutoff) {
  return EligibilityRule(ThresholdRule{std::move(covariate), op, cutoff, std::nullopt});
}

EligibilityRule EligibilityRule::all_of(std::vector<EligibilityRule> rules) {
  return EligibilityRule(ConjunctionRule{std::move(rules)});
}

bool EligibilityRule::is_threshold() const noexcept {
  return std::holds_alternative<ThresholdRule>(node_);
}

const ThresholdRule& EligibilityRule::as_threshold() const { return std::get<ThresholdRule>(node_); }

const std::vector<EligibilityRule>& EligibilityRule::children() const {
  return std::get<std::vector<EligibilityRule>>(node_);
}

namespace {

bool compare(double x, Comparator op, double cutoff) {
  switch (op) {
    case Comparator::Less: return x < cutoff;
    case Comparator::LessEqual: return x <= cutoff;
    case Comparator::Greater: return x > cutoff;
    case Comparator::GreaterEqual: return x >= cutoff;
    case Comparator::Equal: return x == cutoff;
    case Comparator::NotEqual: return x != cutoff;
  }
  return false;
}

double resolved_cutoff(const ThresholdRule& t, const CovariateLocation& loc) {
  if (!t.level) return t.cutoff;
  auto idx = CovariateSchema::level_index(*loc.covariate, *t.level);
  if (!idx) {
    throw Error(ErrorCode::RuleReferencesMissingCovariate,
                "rule references undeclared level '" + *t.level + "' of '" + t.covariate + "'");
  }
  return static_cast<double>(*idx);
}

bool eval_complete(const EligibilityRule& rule, const CovariateSchema& schema,
                   const CoarsenedObservation& obs) {
  if (!rule.is_threshold()) {
    for (const auto& child : rule.children()) {
      if (!eval_complete(child, schema, obs)) return false;
    }
    return true;
  }
  const auto& t = rule.as_threshold();
  if (t.covariate == "a") return compare(static_cast<double>(obs.a), t.op, t.cutoff);
  auto loc = schema.find(t.covariate);
  if (!loc) {
    throw Error(ErrorCode::RuleReferencesMissingCovariate,
                "rule references unknown covariate '" + t.covariate + "'");
  }
  const double x = loc->partition == Partition::FullyObserved ? obs.lStar[loc->position]
                                                              : (*obs.lEligMissing)[loc->position];
  return compare(x, t.op, resolved_cutoff(t, *loc));
}

}  // namespace

void validate_rule(const EligibilityRule& rule, const CovariateSchema& schema) {
  if (!rule.is_threshold()) {
    if (rule.children().empty()) {
      throw Error(ErrorCode::InvalidConfig, "conjunction rule with no sub-rules");
    }
    for (const auto& child : rule.children()) validate_rule(child, schema);
    return;
  }
  const auto& t = rule.as_threshold();
  if (t.covariate == "a") return;
  auto loc = schema.find(t.covariate);
  if (!loc) {
    throw Error(ErrorCode::RuleReferencesMissingCovariate,
                "rule references unknown covariate '" + t.covariate + "'");
  }
  if (t.level && loc->covariate->kind != CovariateKind::Categorical) {
    throw Error(ErrorCode::RuleReferencesMissingCovariate,
                "rule compares numeric covariate '" + t.covariate + "' to a level name");
  }
  resolved_cutoff(t, *loc);
}

std::optional<int> evaluate_eligibility(const EligibilityRule& rule, const CovariateSchema& schema,
                                        const CoarsenedObservation& obs) {
  validate_rule(rule, schema);
  if (obs.r == 0 || !obs.lEligMissing) return std::nullopt;
  return eval_complete(rule, schema, obs) ? 1 : 0;
}

std::vector<std::optional<int>> evaluate_eligibility(const EligibilityRule& rule,
                                                     const CoarsenedDataset& data) {
  validate_rule(rule, data.schema());
  std::vector<std::optional<int>> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& obs = data[i];
    if (obs.r == 1) out[i] = eval_complete(rule, data.schema(), obs) ? 1 : 0;
  }
  return out;
}

std::string_view to_string(Comparator op) noexcept {
  switch (op) {
    case Comparator::Less: return "<";
    case Comparator::LessEqual: return "<=";
    case Comparator::Greater: return ">";
    case Comparator::GreaterEqual: return ">=";
    case Comparator::Equal: return "==";
    case Comparator::NotEqual: return "!=";
  }
  return "?";
}

Comparator parse_comparator(std::string_view op) {
  if (op == "<") return Comparator::Less;
  if (op == "<=") return Comparator::LessEqual;
  if (op == ">") return Comparator::Greater;
  if (op == ">=") return Comparator::GreaterEqual;
  if (op == "==") return Comparator::Equal;
  if (op == "!=") return Comparator::NotEqual;
  throw Error(ErrorCode::InvalidConfig, "unknown comparator '" + std::string(op) + "'");
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> FoldAssignment::members(int j) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] == j) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int j) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] != j) out.push_back(i);
  }
  return out;
}

FoldAssignment assign_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2 || static_cast<std::size_t>(k) > n) {
    throw Error(ErrorCode::InvalidFoldCount,
                "fold count " + std::to_string(k) + " invalid for n = " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Explicit Fisher-Yates: std::shuffle's draw sequence is implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  FoldAssignment out{k, std::vector<int>(n, 0)};
  for (std::size_t pos = 0; pos < n; ++pos) {
    out.fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  }
  return out;
}

}  // namespace attelig
