// Parametric learners: least squares, logistic regression and log-link gamma
// regression, the latter two fitted by iteratively reweighted least squares.

#include <cmath>
#include <limits>
#include <sstream>

#include "attelig/error.hpp"
#include "attelig/learners.hpp"
#include "attelig/stats.hpp"

namespace attelig::learners {

namespace {

constexpr double kConditionLimit = 1e12;
constexpr double kRidgeScale = 1e-8;
// Fitted probabilities this close to 0 or 1 mean the MLE is running off to infinity.
constexpr double kSeparationLinearPredictor = 23.0;

double equilibrated_condition(const Eigen::MatrixXd& gram) {
  const Eigen::Index p = gram.cols();
  Eigen::VectorXd d(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(gram(j, j) > 0.0)) return std::numeric_limits<double>::infinity();
    d(j) = 1.0 / std::sqrt(gram(j, j));
  }
  const Eigen::MatrixXd scaled = d.asDiagonal() * gram * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

/// Returns the ridge added to the diagonal (0 when the system is well conditioned).
double ridge_for(const Eigen::MatrixXd& gram, const FitOptions& opts, const char* what) {
  if (equilibrated_condition(gram) <= kConditionLimit) return 0.0;
  if (!opts.ridgeFallback) {
    throw Error(ErrorCode::RankDeficient, std::string(what) + ": design is rank deficient");
  }
  return kRidgeScale * gram.trace() / static_cast<double>(gram.cols());
}

void check_shapes(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const char* what) {
  if (X.rows() != y.size()) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + ": X and y row counts differ");
  }
  if (X.rows() == 0 || X.cols() == 0) {
    throw Error(ErrorCode::EmptySubset, std::string(what) + ": empty design");
  }
}

double logistic_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  KahanSum s;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    // -log p(y | eta) = log(1 + e^eta) - y * eta, computed stably.
    const double e = eta(i);
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    s.add(softplus - y(i) * e);
  }
  return 2.0 * s.value();
}

double gamma_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  KahanSum s;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double mu = std::exp(eta(i));
    s.add(-std::log(y(i) / mu) + (y(i) - mu) / mu);
  }
  return 2.0 * s.value();
}

}  // namespace

Eigen::VectorXd GlmModel::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd eta = X * beta_;
  switch (link_) {
    case Link::Identity: return eta;
    case Link::Log: return eta.array().exp().matrix();
    case Link::Logit: {
      for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = clip(expit(eta(i)), clipLo_, clipHi_);
      return eta;
    }
  }
  return eta;
}

double logistic_score_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd resid(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) resid(i) = y(i) - expit(eta(i));
  return (X.transpose() * resid).cwiseAbs().maxCoeff();
}

std::shared_ptr<const GlmModel> fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const FitOptions& opts) {
  check_shapes(X, y, "OLS");
  const Eigen::MatrixXd gram = X.transpose() * X;
  const Eigen::VectorXd xty = X.transpose() * y;
  const double ridge = X.rows() < X.cols() ? (opts.ridgeFallback ? kRidgeScale * gram.trace() / X.cols() : -1.0)
                                           : ridge_for(gram, opts, "OLS");
  if (ridge < 0.0) throw Error(ErrorCode::RankDeficient, "OLS: fewer rows than columns");
  Eigen::VectorXd beta;
  if (ridge == 0.0) {
    beta = X.colPivHouseholderQr().solve(y);
  } else {
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += ridge;
    beta = reg.ldlt().solve(xty);
  }
  auto model = std::make_shared<GlmModel>(LearnerKind::Ols, TaskKind::Regression, Link::Identity,
                                          std::move(beta), opts.clipLo, opts.clipHi);
  model->ridgeApplied = ridge > 0.0;
  return model;
}

std::shared_ptr<const GlmModel> fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                             const FitOptions& opts) {
  check_shapes(X, y, "logistic");
  double ones = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) {
      throw Error(ErrorCode::InvalidArgument, "logistic: response must be 0/1");
    }
    ones += y(i);
  }
  if (ones == 0.0 || ones == static_cast<double>(y.size())) {
    throw Error(ErrorCode::SingleClass, "logistic: response has a single class");
  }

  const Eigen::Index p = X.cols();
  double ridge = ridge_for(X.transpose() * X, opts, "logistic");
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = X * beta;
  double dev = logistic_deviance(y, eta);
  double score = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < opts.maxIter; ++iter) {
    Eigen::VectorXd w(y.size()), resid(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double pi = expit(eta(i));
      w(i) = pi * (1.0 - pi);
      resid(i) = y(i) - pi;
    }
    Eigen::VectorXd grad = X.transpose() * resid;
    if (ridge > 0.0) grad -= ridge * beta;
    score = grad.cwiseAbs().maxCoeff();
    if (score <= opts.tol) break;

    Eigen::MatrixXd hess = X.transpose() * w.asDiagonal() * X;
    if (ridge > 0.0) hess.diagonal().array() += ridge;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);

    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 30; ++half, t *= 0.5) {
      const Eigen::VectorXd cand = beta + t * step;
      const Eigen::VectorXd cand_eta = X * cand;
      double cand_dev = logistic_deviance(y, cand_eta);
      if (ridge > 0.0) cand_dev += ridge * cand.squaredNorm();
      if (std::isfinite(cand_dev) && cand_dev <= dev * (1.0 + 1e-12) + 1e-300) {
        beta = cand;
        eta = cand_eta;
        dev = cand_dev;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (eta.cwiseAbs().maxCoeff() > kSeparationLinearPredictor) break;
  }

  const double max_eta = eta.cwiseAbs().maxCoeff();
  if (max_eta > kSeparationLinearPredictor || score > opts.tol) {
    std::ostringstream msg;
    msg << "logistic: IRLS did not converge after " << iter << " iterations (max |score| = " << score
        << ", max |linear predictor| = " << max_eta
        << "); fitted probabilities numerically 0 or 1 indicate separation";
    throw Error(ErrorCode::Separation, msg.str());
  }
  auto model = std::make_shared<GlmModel>(LearnerKind::Logistic, TaskKind::Probability, Link::Logit,
                                          std::move(beta), opts.clipLo, opts.clipHi);
  model->iterations = iter;
  model->ridgeApplied = ridge > 0.0;
  return model;
}

std::shared_ptr<const GlmModel> fit_gamma_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                              bool shapeEstimate, const FitOptions& opts) {
  check_shapes(X, y, "gamma GLM");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(y(i) > 0.0)) throw Error(ErrorCode::NonPositiveResponse, "gamma GLM: response must be > 0");
  }
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const Eigen::MatrixXd gram = X.transpose() * X;
  const double ridge = ridge_for(gram, opts, "gamma GLM");
  Eigen::MatrixXd reg = gram;
  reg.diagonal().array() += ridge;
  const auto solver = reg.ldlt();

  // Start from the least-squares fit of log(y).
  Eigen::VectorXd beta = solver.solve(X.transpose() * y.array().log().matrix());
  Eigen::VectorXd eta = X * beta;
  double dev = gamma_deviance(y, eta);
  double score = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < opts.maxIter; ++iter) {
    // Log link with gamma variance gives unit IRLS weights.
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = y(i) / std::exp(eta(i)) - 1.0;
    Eigen::VectorXd grad = X.transpose() * r;
    if (ridge > 0.0) grad -= ridge * beta;
    score = grad.cwiseAbs().maxCoeff();
    if (score <= opts.tol * std::max<double>(1.0, static_cast<double>(n))) break;
    const Eigen::VectorXd step = solver.solve(grad);
    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 30; ++half, t *= 0.5) {
      const Eigen::VectorXd cand = beta + t * step;
      const Eigen::VectorXd cand_eta = X * cand;
      const double cand_dev = gamma_deviance(y, cand_eta) + ridge * cand.squaredNorm();
      if (std::isfinite(cand_dev) && cand_dev <= dev * (1.0 + 1e-12) + 1e-300) {
        beta = cand;
        eta = cand_eta;
        dev = cand_dev;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (score > 1e-6 * std::max<double>(1.0, static_cast<double>(n))) {
    std::ostringstream msg;
    msg << "gamma GLM: IRLS did not converge (max |score| = " << score << ")";
    throw Error(ErrorCode::NonConvergence, msg.str());
  }
  auto model = std::make_shared<GlmModel>(LearnerKind::GammaGlm, TaskKind::Regression, Link::Log,
                                          std::move(beta), opts.clipLo, opts.clipHi);
  model->iterations = iter;
  model->ridgeApplied = ridge > 0.0;
  if (shapeEstimate && n > p) {
    KahanSum pearson;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = std::exp(eta(i));
      pearson.add((y(i) - mu) * (y(i) - mu) / (mu * mu));
    }
    const double dispersion = pearson.value() / static_cast<double>(n - p);
    model->shape = 1.0 / dispersion;
  }
  return model;
}

}  // namespace attelig::learners
