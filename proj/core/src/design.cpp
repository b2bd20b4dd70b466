#include "attelig/design.hpp"

#include <set>

#include "attelig/error.hpp"

namespace attelig {

namespace {

struct Atom {
  enum class Kind { Value, Level, Treatment, Outcome } kind = Kind::Value;
  CovariateLocation loc;
  std::size_t level = 0;
};

struct PlannedColumn {
  ColumnMeta meta;
  std::vector<Atom> atoms;  // product of atoms; empty = intercept
};

std::vector<std::pair<std::string, Atom>> expand_factor(const CovariateSchema& schema,
                                                        const std::string& name) {
  if (name == "a") return {{"a", Atom{Atom::Kind::Treatment, {}, 0}}};
  if (name == "y") return {{"y", Atom{Atom::Kind::Outcome, {}, 0}}};
  auto loc = schema.find(name);
  if (!loc) throw Error(ErrorCode::UnknownCovariate, "unknown covariate '" + name + "'");
  const Covariate& c = *loc->covariate;
  if (c.kind == CovariateKind::Numeric) return {{name, Atom{Atom::Kind::Value, *loc, 0}}};
  std::vector<std::pair<std::string, Atom>> out;
  for (std::size_t l = 1; l < c.levels.size(); ++l) {
    out.push_back({name + "[" + c.levels[l] + "]", Atom{Atom::Kind::Level, *loc, l}});
  }
  return out;
}

std::vector<PlannedColumn> plan(const CovariateSchema& schema, const FeatureSpec& spec) {
  std::vector<PlannedColumn> cols;
  cols.push_back({{ColumnOrigin::Intercept, "(Intercept)"}, {}});

  std::vector<std::size_t> included;  // schema indices, schema order
  std::set<std::string> wanted;
  if (spec.covariates) {
    for (const auto& name : *spec.covariates) {
      auto loc = schema.find(name);
      if (!loc) throw Error(ErrorCode::UnknownCovariate, "unknown covariate '" + name + "'");
      if (loc->partition != Partition::FullyObserved) {
        throw Error(ErrorCode::InvalidArgument,
                    "'" + name + "' is an eligibility covariate; use includeElig instead");
      }
      wanted.insert(name);
    }
  }
  for (std::size_t i = 0; i < schema.covariates().size(); ++i) {
    const auto& c = schema.covariates()[i];
    const bool take = c.partition == Partition::FullyObserved
                          ? (!spec.covariates || wanted.count(c.name) > 0)
                          : spec.includeElig;
    if (take) included.push_back(i);
  }
  for (std::size_t i : included) {
    const auto& c = schema.covariates()[i];
    if (c.kind != CovariateKind::Numeric) continue;
    auto loc = *schema.find(c.name);
    cols.push_back({{ColumnOrigin::Numeric, c.name}, {Atom{Atom::Kind::Value, loc, 0}}});
  }
  for (std::size_t i : included) {
    const auto& c = schema.covariates()[i];
    if (c.kind != CovariateKind::Categorical) continue;
    for (auto& [name, atom] : expand_factor(schema, c.name)) {
      cols.push_back({{ColumnOrigin::CategoricalLevel, name}, {atom}});
    }
  }
  if (spec.includeTreatment) cols.push_back({{ColumnOrigin::Treatment, "a"}, {Atom{Atom::Kind::Treatment, {}, 0}}});
  if (spec.includeOutcome) cols.push_back({{ColumnOrigin::Outcome, "y"}, {Atom{Atom::Kind::Outcome, {}, 0}}});

  if (spec.treatmentInteractions) {
    const std::size_t main_count = cols.size();
    for (std::size_t j = 1; j < main_count; ++j) {
      if (cols[j].meta.origin == ColumnOrigin::Treatment) continue;
      PlannedColumn pc{{ColumnOrigin::Interaction, "a:" + cols[j].meta.name}, cols[j].atoms};
      pc.atoms.push_back(Atom{Atom::Kind::Treatment, {}, 0});
      cols.push_back(std::move(pc));
    }
  }

  for (const auto& [lhs, rhs] : spec.interactions) {
    for (auto& [ln, la] : expand_factor(schema, lhs)) {
      for (auto& [rn, ra] : expand_factor(schema, rhs)) {
        cols.push_back({{ColumnOrigin::Interaction, ln + ":" + rn}, {la, ra}});
      }
    }
  }

  std::set<std::string> names;
  for (const auto& c : cols) {
    if (!names.insert(c.meta.name).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate design column '" + c.meta.name + "'");
    }
  }
  return cols;
}

}  // namespace

std::vector<ColumnMeta> design_columns(const CovariateSchema& schema, const FeatureSpec& spec) {
  std::vector<ColumnMeta> out;
  for (auto& c : plan(schema, spec)) out.push_back(std::move(c.meta));
  return out;
}

DesignMatrix build_design(const CoarsenedDataset& data, std::span<const std::size_t> rows,
                          const FeatureSpec& spec, const DesignOverrides& overrides) {
  const auto cols = plan(data.schema(), spec);
  DesignMatrix out;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  out.columns.reserve(cols.size());
  for (const auto& c : cols) out.columns.push_back(c.meta);

  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const auto& obs = data[rows[ri]];
    const double a = overrides.treatment ? static_cast<double>(*overrides.treatment) : obs.a;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      double v = 1.0;
      for (const Atom& atom : cols[j].atoms) {
        switch (atom.kind) {
          case Atom::Kind::Treatment: v *= a; break;
          case Atom::Kind::Outcome: v *= obs.y; break;
          case Atom::Kind::Value:
          case Atom::Kind::Level: {
            double x;
            if (atom.loc.partition == Partition::FullyObserved) {
              x = obs.lStar[atom.loc.position];
            } else {
              if (!obs.lEligMissing) {
                throw Error(ErrorCode::MissingValueInRequiredColumn,
                            "record '" + obs.id + "' lacks '" + atom.loc.covariate->name + "'");
              }
              x = (*obs.lEligMissing)[atom.loc.position];
            }
            v *= atom.kind == Atom::Kind::Value ? x : (static_cast<std::size_t>(x) == atom.level ? 1.0 : 0.0);
            break;
          }
        }
      }
      out.values(static_cast<Eigen::Index>(ri), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return out;
}

DesignMatrix build_design(const CoarsenedDataset& data,
                          const std::vector<std::pair<std::string, std::string>>& interactions,
                          bool includeElig) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  FeatureSpec spec;
  spec.includeElig = includeElig;
  spec.interactions = interactions;
  return build_design(data, rows, spec);
}

}  // namespace attelig
