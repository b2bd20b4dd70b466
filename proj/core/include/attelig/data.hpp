#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace attelig {

enum class CovariateKind { Numeric, Categorical };

/// Which block of the coarsened record a covariate lives in. Eligibility
/// covariates that are never missing belong to the fully observed block.
enum class Partition { FullyObserved, EligibilityMissing };

struct Covariate {
  std::string name;
  CovariateKind kind = CovariateKind::Numeric;
  std::vector<std::string> levels;  // categorical only; first level is the reference
  Partition partition = Partition::FullyObserved;
};

/// Where a named covariate sits inside an observation.
struct CovariateLocation {
  const Covariate* covariate = nullptr;
  Partition partition = Partition::FullyObserved;
  std::size_t position = 0;  // index within lStar or lEligMissing
};

class CovariateSchema {
 public:
  CovariateSchema() = default;
  explicit CovariateSchema(std::vector<Covariate> covariates);

  const std::vector<Covariate>& covariates() const noexcept { return covariates_; }
  std::size_t lstar_size() const noexcept { return lstar_.size(); }
  std::size_t elig_size() const noexcept { return elig_.size(); }
  /// Schema indices of the fully observed / eligibility-missing covariates, in schema order.
  const std::vector<std::size_t>& lstar_columns() const noexcept { return lstar_; }
  const std::vector<std::size_t>& elig_columns() const noexcept { return elig_; }

  std::optional<CovariateLocation> find(std::string_view name) const;
  CovariateLocation at(std::string_view name) const;  // throws UnknownCovariate

  /// Level index for a categorical covariate; nullopt if the level is not declared.
  static std::optional<std::size_t> level_index(const Covariate& c, std::string_view level);

 private:
  std::vector<Covariate> covariates_;
  std::vector<std::size_t> lstar_;
  std::vector<std::size_t> elig_;
  std::vector<std::size_t> position_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// One subject: O = (L*, A, Y, R, R * L^e_m). Categorical values are stored as level indices.
struct CoarsenedObservation {
  std::string id;
  std::vector<double> lStar;
  int a = 0;
  double y = 0.0;
  int r = 0;
  std::optional<std::vector<double>> lEligMissing;
};

class CoarsenedDataset {
 public:
  CoarsenedDataset(CovariateSchema schema, std::vector<CoarsenedObservation> records);

  const CovariateSchema& schema() const noexcept { return schema_; }
  const std::vector<CoarsenedObservation>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const CoarsenedObservation& operator[](std::size_t i) const { return records_[i]; }

  /// Value of a named covariate for record i; nullopt when it is an
  /// eligibility covariate and the record is incomplete.
  std::optional<double> value(std::size_t i, const CovariateLocation& loc) const;

  /// New dataset made of the given rows (duplicates allowed, e.g. bootstrap resamples).
  CoarsenedDataset subset(std::span<const std::size_t> rows) const;

 private:
  CovariateSchema schema_;
  std::vector<CoarsenedObservation> records_;
};

void validate_observation(const CovariateSchema& schema, const CoarsenedObservation& obs);

// ---------------------------------------------------------------------------
// Eligibility rules

enum class Comparator { Less, LessEqual, Greater, GreaterEqual, Equal, NotEqual };

/// `covariate <op> cutoff`. The covariate may be any schema covariate or the
/// reserved name "a" (treatment). For categorical covariates the cutoff can be
/// given as a level name, which is resolved to its index.
struct ThresholdRule {
  std::string covariate;
  Comparator op = Comparator::GreaterEqual;
  double cutoff = 0.0;
  std::optional<std::string> level;
};

struct ConjunctionRule;

class EligibilityRule {
 public:
  EligibilityRule(ThresholdRule rule);  // NOLINT(google-explicit-constructor)
  EligibilityRule(ConjunctionRule rule);  // NOLINT(google-explicit-constructor)

  static EligibilityRule threshold(std::string covariate, Comparator op, double cutoff);
  static EligibilityRule all_of(std::vector<EligibilityRule> rules);

  bool is_threshold() const noexcept;
  const ThresholdRule& as_threshold() const;
  const std::vector<EligibilityRule>& children() const;

 private:
  std::variant<ThresholdRule, std::vector<EligibilityRule>> node_;
};

struct ConjunctionRule {
  std::vector<EligibilityRule> rules;
};

/// Throws RuleReferencesMissingCovariate if the rule names a covariate (or
/// level) the schema does not declare.
void validate_rule(const EligibilityRule& rule, const CovariateSchema& schema);

/// E = g(L^e, A) for complete cases; nullopt ("unknown") when r = 0.
std::optional<int> evaluate_eligibility(const EligibilityRule& rule, const CovariateSchema& schema,
                                        const CoarsenedObservation& obs);

/// Eligibility for every record of a dataset.
std::vector<std::optional<int>> evaluate_eligibility(const EligibilityRule& rule,
                                                     const CoarsenedDataset& data);

std::string_view to_string(Comparator op) noexcept;
Comparator parse_comparator(std::string_view op);

// ---------------------------------------------------------------------------
// Folds

struct FoldAssignment {
  int k = 0;
  std::vector<int> fold;  // per-record fold index in [0, k)

  std::vector<std::size_t> members(int j) const;
  std::vector<std::size_t> complement(int j) const;
};

FoldAssignment assign_folds(std::size_t n, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV

CoarsenedDataset load_csv(const std::filesystem::path& path, const CovariateSchema& schema);
CoarsenedDataset parse_csv(std::string_view text, const CovariateSchema& schema);
std::string to_csv(const CoarsenedDataset& data);
void write_csv(const std::filesystem::path& path, const CoarsenedDataset& data);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double x);

}  // namespace attelig
