#include <cmath>

#include "attelig/error.hpp"
#include "attelig/learners.hpp"

namespace attelig::learners {

std::string_view to_string(LearnerKind kind) noexcept {
  switch (kind) {
    case LearnerKind::Ols: return "ols";
    case LearnerKind::Logistic: return "logistic";
    case LearnerKind::GammaGlm: return "gamma_glm";
    case LearnerKind::Forest: return "forest";
    case LearnerKind::Stack: return "stack";
  }
  return "?";
}

LearnerKind parse_learner_kind(std::string_view name) {
  if (name == "ols") return LearnerKind::Ols;
  if (name == "logistic") return LearnerKind::Logistic;
  if (name == "gamma_glm") return LearnerKind::GammaGlm;
  if (name == "forest") return LearnerKind::Forest;
  if (name == "stack") return LearnerKind::Stack;
  throw Error(ErrorCode::InvalidConfig, "unknown learner kind '" + std::string(name) + "'");
}

LearnerSpec LearnerSpec::forest(int numTrees, double mtryFraction, int minNodeSize) {
  return {LearnerKind::Forest,
          {{"numTrees", numTrees}, {"mtryFraction", mtryFraction}, {"minNodeSize", minNodeSize}},
          {}};
}

LearnerSpec LearnerSpec::stack(std::vector<LearnerSpec> members, int cvFolds) {
  return {LearnerKind::Stack, {{"cvFolds", cvFolds}}, std::move(members)};
}

double LearnerSpec::get(const std::string& key, double fallback) const {
  auto it = hyper.find(key);
  return it == hyper.end() ? fallback : it->second;
}

void LearnerSpec::validate() const {
  auto bad = [this](const std::string& what) {
    throw Error(ErrorCode::InvalidConfig, std::string(to_string(kind)) + ": " + what);
  };
  auto whole = [](double v) { return std::isfinite(v) && v == std::floor(v); };
  switch (kind) {
    case LearnerKind::Forest: {
      for (const auto& [key, value] : hyper) {
        if (key != "numTrees" && key != "mtryFraction" && key != "minNodeSize" && key != "maxDepth" &&
            key != "replace" && key != "sampleFraction" && key != "maxBins") {
          bad("unknown hyperparameter '" + key + "'");
        }
        (void)value;
      }
      const double trees = get("numTrees", 100);
      if (!whole(trees) || trees < 1) bad("numTrees must be an integer >= 1");
      const double mtry = get("mtryFraction", 1.0);
      if (!(mtry > 0.0) || !std::isfinite(mtry)) bad("mtryFraction must be > 0");
      const double node = get("minNodeSize", 5);
      if (!whole(node) || node < 1) bad("minNodeSize must be an integer >= 1");
      const double depth = get("maxDepth", 0);
      if (!whole(depth) || depth < 0) bad("maxDepth must be an integer >= 0");
      const double rep = get("replace", 1);
      if (rep != 0.0 && rep != 1.0) bad("replace must be 0 or 1");
      const double frac = get("sampleFraction", 1.0);
      if (!(frac > 0.0 && frac <= 1.0)) bad("sampleFraction must lie in (0, 1]");
      const double bins = get("maxBins", 256);
      if (!whole(bins) || bins < 2 || bins > 65535) bad("maxBins must be an integer in [2, 65535]");
      break;
    }
    case LearnerKind::Stack: {
      if (members.size() < 2) bad("needs at least 2 members");
      const double folds = get("cvFolds", 5);
      if (!whole(folds) || folds < 2) bad("cvFolds must be an integer >= 2");
      for (const auto& m : members) m.validate();
      break;
    }
    default:
      if (!hyper.empty()) bad("takes no hyperparameters");
      if (!members.empty()) bad("takes no members");
  }
}

ModelPtr fit(const LearnerSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, TaskKind task,
             const FitOptions& opts) {
  spec.validate();
  switch (spec.kind) {
    case LearnerKind::Ols: return fit_ols(X, y, opts);
    case LearnerKind::Logistic: return fit_logistic(X, y, opts);
    case LearnerKind::GammaGlm: return fit_gamma_glm(X, y, true, opts);
    case LearnerKind::Forest: return fit_forest(X, y, spec, task, opts);
    case LearnerKind::Stack:
      return fit_stack(X, y, spec.members, static_cast<int>(spec.get("cvFolds", 5)), task, opts);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown learner kind");
}

}  // namespace attelig::learners
