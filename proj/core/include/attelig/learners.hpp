#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "attelig/design.hpp"

namespace attelig::learners {

enum class LearnerKind { Ols, Logistic, GammaGlm, Forest, Stack };
enum class TaskKind { Regression, Probability };

std::string_view to_string(LearnerKind kind) noexcept;
LearnerKind parse_learner_kind(std::string_view name);

/// Learner description as it appears in run configs.
///
/// Forest hyperparameters: numTrees (>= 1), mtryFraction (> 0), minNodeSize (>= 1),
/// maxDepth (0 = unlimited), replace (1 = bootstrap, 0 = use the full sample),
/// sampleFraction in (0, 1], maxBins (candidate split points per feature, default 256). Stack: cvFolds (>= 2) plus >= 2 members.
struct LearnerSpec {
  LearnerKind kind = LearnerKind::Ols;
  std::map<std::string, double> hyper;
  std::vector<LearnerSpec> members;

  static LearnerSpec ols() { return {LearnerKind::Ols, {}, {}}; }
  static LearnerSpec logistic() { return {LearnerKind::Logistic, {}, {}}; }
  static LearnerSpec gamma_glm() { return {LearnerKind::GammaGlm, {}, {}}; }
  static LearnerSpec forest(int numTrees = 100, double mtryFraction = 1.0, int minNodeSize = 5);
  static LearnerSpec stack(std::vector<LearnerSpec> members, int cvFolds = 5);

  double get(const std::string& key, double fallback) const;
  void validate() const;
};

struct FitOptions {
  double clipLo = 0.005;
  double clipHi = 0.995;
  /// Add 1e-8 * trace(X'X) / p to the diagonal when the equilibrated X'X has
  /// condition number above 1e12.
  bool ridgeFallback = true;
  int maxIter = 100;
  double tol = 1e-8;
  std::uint64_t seed = 1;
};

class FittedModel {
 public:
  virtual ~FittedModel() = default;
  virtual Eigen::VectorXd predict(const Eigen::MatrixXd& X) const = 0;
  virtual LearnerKind kind() const noexcept = 0;
  TaskKind task() const noexcept { return task_; }
  const std::vector<ColumnMeta>& columns() const noexcept { return columns_; }
  void set_columns(std::vector<ColumnMeta> columns) { columns_ = std::move(columns); }

 protected:
  explicit FittedModel(TaskKind task) : task_(task) {}

 private:
  TaskKind task_;
  std::vector<ColumnMeta> columns_;
};

using ModelPtr = std::shared_ptr<const FittedModel>;

enum class Link { Identity, Logit, Log };

class GlmModel final : public FittedModel {
 public:
  GlmModel(LearnerKind kind, TaskKind task, Link link, Eigen::VectorXd beta, double clipLo,
           double clipHi)
      : FittedModel(task), kind_(kind), link_(link), beta_(std::move(beta)), clipLo_(clipLo), clipHi_(clipHi) {}

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;
  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& X) const { return X * beta_; }
  LearnerKind kind() const noexcept override { return kind_; }

  const Eigen::VectorXd& coefficients() const noexcept { return beta_; }
  int iterations = 0;
  bool ridgeApplied = false;
  /// Method-of-moments gamma shape (gamma GLM only).
  double shape = 0.0;

 private:
  LearnerKind kind_;
  Link link_;
  Eigen::VectorXd beta_;
  double clipLo_;
  double clipHi_;
};

class ConstantModel final : public FittedModel {
 public:
  ConstantModel(TaskKind task, double value) : FittedModel(task), value_(value) {}
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override {
    return Eigen::VectorXd::Constant(X.rows(), value_);
  }
  LearnerKind kind() const noexcept override { return LearnerKind::Ols; }
  double value() const noexcept { return value_; }

 private:
  double value_;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

class ForestModel final : public FittedModel {
 public:
  ForestModel(TaskKind task, std::vector<std::vector<TreeNode>> trees, double clipLo, double clipHi)
      : FittedModel(task), trees_(std::move(trees)), clipLo_(clipLo), clipHi_(clipHi) {}

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;
  LearnerKind kind() const noexcept override { return LearnerKind::Forest; }
  std::size_t num_trees() const noexcept { return trees_.size(); }
  const std::vector<std::vector<TreeNode>>& trees() const noexcept { return trees_; }

 private:
  std::vector<std::vector<TreeNode>> trees_;
  double clipLo_;
  double clipHi_;
};

class StackModel final : public FittedModel {
 public:
  StackModel(TaskKind task, std::vector<ModelPtr> members, std::vector<LearnerSpec> specs,
             Eigen::VectorXd weights, Eigen::VectorXd memberCvRisk, double stackCvRisk,
             double clipLo, double clipHi);

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;
  LearnerKind kind() const noexcept override { return LearnerKind::Stack; }

  /// Convex weights over the member list (failed members carry weight 0).
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  /// Cross-validated mean squared error per member (NaN for failed members).
  const Eigen::VectorXd& member_cv_risk() const noexcept { return memberCvRisk_; }
  double stack_cv_risk() const noexcept { return stackCvRisk_; }
  const std::vector<LearnerSpec>& member_specs() const noexcept { return specs_; }

 private:
  std::vector<ModelPtr> members_;  // null for members with zero weight
  std::vector<LearnerSpec> specs_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd memberCvRisk_;
  double stackCvRisk_;
  double clipLo_;
  double clipHi_;
};

std::shared_ptr<const GlmModel> fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const FitOptions& opts = {});
std::shared_ptr<const GlmModel> fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                             const FitOptions& opts = {});
std::shared_ptr<const GlmModel> fit_gamma_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                              bool shapeEstimate = true, const FitOptions& opts = {});
std::shared_ptr<const ForestModel> fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                              const LearnerSpec& spec, TaskKind task,
                                              const FitOptions& opts = {});
std::shared_ptr<const StackModel> fit_stack(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            const std::vector<LearnerSpec>& members, int cvFolds,
                                            TaskKind task, const FitOptions& opts = {});

/// Dispatch on spec.kind.
ModelPtr fit(const LearnerSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
             TaskKind task, const FitOptions& opts = {});

/// Minimise (1/n)||y - Z w||^2 over the probability simplex.
Eigen::VectorXd simplex_least_squares(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                                      double tol = 1e-10, int maxIter = 100000);

/// Euclidean projection onto {w >= 0, sum w = 1}.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

/// max_j |sum_i x_ij (y_i - p_i)| at the given coefficients (unclipped probabilities).
double logistic_score_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);

}  // namespace attelig::learners
