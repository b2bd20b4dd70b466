#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "attelig/data.hpp"

namespace attelig {

enum class ColumnOrigin { Intercept, Numeric, CategoricalLevel, Treatment, Outcome, Interaction };

struct ColumnMeta {
  ColumnOrigin origin = ColumnOrigin::Numeric;
  std::string name;
};

/// Which inputs a design matrix draws on. Interaction factors may name any
/// schema covariate or the reserved names "a" (treatment) and "y" (outcome).
struct FeatureSpec {
  /// Fully observed covariates to include; nullopt means all of L*.
  std::optional<std::vector<std::string>> covariates;
  bool includeElig = false;
  bool includeTreatment = false;
  bool includeOutcome = false;
  std::vector<std::pair<std::string, std::string>> interactions;
  /// Append A x (every other main-effect column) products.
  bool treatmentInteractions = false;
};

/// Per-row substitutions applied while building a design, e.g. forcing a = 0
/// to evaluate a counterfactual outcome regression.
struct DesignOverrides {
  std::optional<int> treatment;
};

struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<ColumnMeta> columns;

  Eigen::Index rows() const noexcept { return values.rows(); }
  Eigen::Index cols() const noexcept { return values.cols(); }
};

/// Column order: intercept, numeric covariates (schema order), categorical
/// level indicators (schema/level order, first level omitted), treatment,
/// outcome, then interactions in spec order.
DesignMatrix build_design(const CoarsenedDataset& data, std::span<const std::size_t> rows,
                          const FeatureSpec& spec, const DesignOverrides& overrides = {});

/// All rows of the dataset with explicit interaction pairs.
DesignMatrix build_design(const CoarsenedDataset& data,
                          const std::vector<std::pair<std::string, std::string>>& interactions,
                          bool includeElig);

/// Column names that `build_design` would emit for `spec`, without touching data.
std::vector<ColumnMeta> design_columns(const CovariateSchema& schema, const FeatureSpec& spec);

}  // namespace attelig
