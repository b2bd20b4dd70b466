// Cross-validated convex stacking.

#include <algorithm>
#include <cmath>
#include <limits>

#include "attelig/data.hpp"
#include "attelig/error.hpp"
#include "attelig/learners.hpp"
#include "attelig/stats.hpp"

namespace attelig::learners {

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& y, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
  return out;
}

double mse(const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  KahanSum s;
  for (Eigen::Index i = 0; i < y.size(); ++i) s.add((y(i) - pred(i)) * (y(i) - pred(i)));
  return s.value() / static_cast<double>(y.size());
}

double quadratic_risk(const Eigen::MatrixXd& G, const Eigen::VectorXd& b, double yy, const Eigen::VectorXd& w) {
  return w.dot(G * w) - 2.0 * b.dot(w) + yy;
}

}  // namespace

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index m = v.size();
  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, tau = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    cum += u[static_cast<std::size_t>(j)];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) tau = t;
  }
  Eigen::VectorXd w = (v.array() - tau).max(0.0).matrix();
  const double s = w.sum();
  if (s > 0.0) w /= s;
  return w;
}

Eigen::VectorXd simplex_least_squares(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double tol,
                                      int maxIter) {
  const Eigen::Index m = Z.cols();
  if (m == 0) throw Error(ErrorCode::InvalidArgument, "simplex_least_squares: no columns");
  if (m == 1) return Eigen::VectorXd::Ones(1);
  const double n = static_cast<double>(Z.rows());
  const Eigen::MatrixXd G = Z.transpose() * Z / n;
  const Eigen::VectorXd b = Z.transpose() * y / n;
  const double yy = y.squaredNorm() / n;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  const double lipschitz = 2.0 * std::max(es.eigenvalues().maxCoeff(), 1e-300);
  const double step = 1.0 / lipschitz;

  // FISTA on f(w) = w'Gw - 2b'w over the simplex.
  Eigen::VectorXd w = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  Eigen::VectorXd z = w;
  double t = 1.0;
  for (int it = 0; it < maxIter; ++it) {
    const Eigen::VectorXd grad = 2.0 * (G * z - b);
    const Eigen::VectorXd next = project_to_simplex(z - step * grad);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double change = (next - w).cwiseAbs().maxCoeff();
    z = next + ((t - 1.0) / t_next) * (next - w);
    // Restart momentum when it stops helping.
    if (quadratic_risk(G, b, yy, next) > quadratic_risk(G, b, yy, w)) {
      z = next;
      t = 1.0;
    } else {
      t = t_next;
    }
    w = next;
    if (change <= tol) break;
  }

  // The optimum can sit on a vertex the iterates approach only slowly.
  double best = quadratic_risk(G, b, yy, w);
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e(j) = 1.0;
    const double r = quadratic_risk(G, b, yy, e);
    if (r < best) {
      best = r;
      w = e;
    }
  }
  return w;
}

StackModel::StackModel(TaskKind task, std::vector<ModelPtr> members, std::vector<LearnerSpec> specs,
                       Eigen::VectorXd weights, Eigen::VectorXd memberCvRisk, double stackCvRisk,
                       double clipLo, double clipHi)
    : FittedModel(task),
      members_(std::move(members)),
      specs_(std::move(specs)),
      weights_(std::move(weights)),
      memberCvRisk_(std::move(memberCvRisk)),
      stackCvRisk_(stackCvRisk),
      clipLo_(clipLo),
      clipHi_(clipHi) {}

Eigen::VectorXd StackModel::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(X.rows());
  for (std::size_t k = 0; k < members_.size(); ++k) {
    if (!members_[k]) continue;
    out += weights_(static_cast<Eigen::Index>(k)) * members_[k]->predict(X);
  }
  if (task() == TaskKind::Probability) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = clip(out(i), clipLo_, clipHi_);
  }
  return out;
}

std::shared_ptr<const StackModel> fit_stack(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            const std::vector<LearnerSpec>& members, int cvFolds,
                                            TaskKind task, const FitOptions& opts) {
  if (members.size() < 2) throw Error(ErrorCode::InvalidArgument, "stack: needs at least 2 members");
  if (X.rows() != y.size()) throw Error(ErrorCode::InvalidArgument, "stack: X and y row counts differ");
  const auto n = static_cast<std::size_t>(X.rows());
  const FoldAssignment folds = assign_folds(n, cvFolds, derive_seed(opts.seed, 0x5743ULL));

  const auto m = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd Z(X.rows(), m);
  Eigen::VectorXd risk = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> ok(members.size(), true);
  std::string last_error;

  for (std::size_t k = 0; k < members.size(); ++k) {
    FitOptions member_opts = opts;
    member_opts.seed = derive_seed(opts.seed, 1000 + k);
    try {
      for (int j = 0; j < cvFolds; ++j) {
        const auto train = folds.complement(j);
        const auto test = folds.members(j);
        const auto model = fit(members[k], take_rows(X, train), take_rows(y, train), task, member_opts);
        const Eigen::VectorXd pred = model->predict(take_rows(X, test));
        for (std::size_t i = 0; i < test.size(); ++i) {
          Z(static_cast<Eigen::Index>(test[i]), static_cast<Eigen::Index>(k)) = pred(static_cast<Eigen::Index>(i));
        }
      }
      risk(static_cast<Eigen::Index>(k)) = mse(y, Z.col(static_cast<Eigen::Index>(k)));
    } catch (const Error& e) {
      ok[k] = false;
      last_error = e.what();
    }
  }

  std::vector<Eigen::Index> alive;
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (ok[k]) alive.push_back(static_cast<Eigen::Index>(k));
  }
  if (alive.empty()) throw Error(ErrorCode::MemberAllFailed, "stack: every member failed (" + last_error + ")");

  Eigen::MatrixXd Zok(X.rows(), static_cast<Eigen::Index>(alive.size()));
  for (std::size_t c = 0; c < alive.size(); ++c) Zok.col(static_cast<Eigen::Index>(c)) = Z.col(alive[c]);
  const Eigen::VectorXd w_alive = simplex_least_squares(Zok, y);
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(m);
  for (std::size_t c = 0; c < alive.size(); ++c) weights(alive[c]) = w_alive(static_cast<Eigen::Index>(c));
  const double stack_risk = mse(y, Zok * w_alive);

  std::vector<ModelPtr> fitted(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (!(weights(static_cast<Eigen::Index>(k)) > 0.0)) continue;
    FitOptions member_opts = opts;
    member_opts.seed = derive_seed(opts.seed, 1000 + k);
    fitted[k] = fit(members[k], X, y, task, member_opts);
  }
  return std::make_shared<StackModel>(task, std::move(fitted), members, std::move(weights), std::move(risk),
                                      stack_risk, opts.clipLo, opts.clipHi);
}

}  // namespace attelig::learners
