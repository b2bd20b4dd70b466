// Bagged CART ensemble. Candidate split points come from per-feature bins
// (exact CART whenever a feature has at most maxBins distinct values).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "attelig/error.hpp"
#include "attelig/learners.hpp"
#include "attelig/stats.hpp"

namespace attelig::learners {

namespace {

struct BinnedFeature {
  int column = 0;
  std::vector<double> edges;  // bin b holds values in (edges[b-1], edges[b]]
  int bins() const { return static_cast<int>(edges.size()) + 1; }
};

BinnedFeature bin_feature(const Eigen::MatrixXd& X, int column, int maxBins) {
  std::vector<double> v(X.col(column).data(), X.col(column).data() + X.rows());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  BinnedFeature f;
  f.column = column;
  const std::size_t u = v.size();
  if (u <= static_cast<std::size_t>(maxBins)) {
    for (std::size_t i = 0; i + 1 < u; ++i) f.edges.push_back(0.5 * (v[i] + v[i + 1]));
  } else {
    // Quantiles of the distinct values.
    for (int b = 1; b < maxBins; ++b) {
      const std::size_t i = static_cast<std::size_t>(static_cast<double>(b) * static_cast<double>(u) / maxBins) - 1;
      const double e = 0.5 * (v[i] + v[i + 1]);
      if (f.edges.empty() || e > f.edges.back()) f.edges.push_back(e);
    }
  }
  return f;
}

struct TreeParams {
  int mtry = 1;
  std::size_t minNodeSize = 5;
  int maxDepth = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<BinnedFeature>& features, const std::vector<std::uint16_t>& codes,
              std::size_t n, const Eigen::VectorXd& y, const TreeParams& params, std::mt19937_64& rng)
      : features_(features), codes_(codes), n_(n), y_(y), params_(params), rng_(rng) {
    int widest = 1;
    for (const auto& f : features_) widest = std::max(widest, f.bins());
    sum_.resize(static_cast<std::size_t>(widest));
    count_.resize(static_cast<std::size_t>(widest));
    order_.resize(features_.size());
    std::iota(order_.begin(), order_.end(), 0);
  }

  std::vector<TreeNode> build(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    nodes_.clear();
    grow(0, rows_.size(), 0);
    return std::move(nodes_);
  }

 private:
  struct Split {
    int feature = -1;  // index into features_
    int bin = -1;      // rows with code <= bin go left
    double gain = -1.0;
  };

  std::uint16_t code(int feature, std::size_t row) const {
    return codes_[static_cast<std::size_t>(feature) * n_ + row];
  }

  int grow(std::size_t lo, std::size_t hi, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    double sum = 0.0, sq = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      const double v = y_(static_cast<Eigen::Index>(rows_[k]));
      sum += v;
      sq += v * v;
    }
    const double m = static_cast<double>(hi - lo);
    nodes_[id].value = sum / m;

    const bool pure = sq - sum * sum / m <= 1e-12 * std::max(1.0, sq);
    const bool depth_ok = params_.maxDepth <= 0 || depth < params_.maxDepth;
    if (pure || !depth_ok || hi - lo < 2 * params_.minNodeSize) return id;

    const Split s = best_split(lo, hi, sum);
    if (s.feature < 0) return id;

    auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(lo),
                              rows_.begin() + static_cast<std::ptrdiff_t>(hi),
                              [&](std::size_t r) { return code(s.feature, r) <= s.bin; });
    const auto split_at = static_cast<std::size_t>(mid - rows_.begin());
    nodes_[id].feature = features_[static_cast<std::size_t>(s.feature)].column;
    nodes_[id].threshold = features_[static_cast<std::size_t>(s.feature)].edges[static_cast<std::size_t>(s.bin)];
    const int l = grow(lo, split_at, depth + 1);
    nodes_[id].left = l;
    const int r = grow(split_at, hi, depth + 1);
    nodes_[id].right = r;
    return id;
  }

  Split best_split(std::size_t lo, std::size_t hi, double total) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    Split best;
    // Sampled features first; if none of them can split, keep scanning the rest.
    for (std::size_t k = 0; k < order_.size(); ++k) {
      if (static_cast<int>(k) >= params_.mtry && best.feature >= 0) break;
      scan_feature(lo, hi, order_[k], total, best);
    }
    return best;
  }

  void scan_feature(std::size_t lo, std::size_t hi, int f, double total, Split& best) {
    const int nb = features_[static_cast<std::size_t>(f)].bins();
    std::fill_n(sum_.begin(), nb, 0.0);
    std::fill_n(count_.begin(), nb, std::size_t{0});
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t r = rows_[k];
      const auto c = code(f, r);
      sum_[c] += y_(static_cast<Eigen::Index>(r));
      ++count_[c];
    }
    const std::size_t m = hi - lo;
    const double parent = total * total / static_cast<double>(m);
    double left = 0.0;
    std::size_t nl = 0;
    for (int b = 0; b + 1 < nb; ++b) {
      left += sum_[static_cast<std::size_t>(b)];
      nl += count_[static_cast<std::size_t>(b)];
      if (count_[static_cast<std::size_t>(b)] == 0) continue;
      if (nl == m) break;
      const std::size_t nr = m - nl;
      if (nl < params_.minNodeSize || nr < params_.minNodeSize) continue;
      const double right = total - left;
      const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) - parent;
      if (gain > best.gain + 1e-12) {
        best.gain = std::max(gain, 0.0);
        best.feature = f;
        best.bin = b;
      }
    }
  }

  const std::vector<BinnedFeature>& features_;
  const std::vector<std::uint16_t>& codes_;
  std::size_t n_;
  const Eigen::VectorXd& y_;
  TreeParams params_;
  std::mt19937_64& rng_;
  std::vector<std::size_t> rows_;
  std::vector<int> order_;
  std::vector<double> sum_;
  std::vector<std::size_t> count_;
  std::vector<TreeNode> nodes_;
};

double predict_tree(const std::vector<TreeNode>& tree, const Eigen::MatrixXd& X, Eigen::Index row) {
  int id = 0;
  while (tree[id].feature >= 0) {
    id = X(row, tree[id].feature) <= tree[id].threshold ? tree[id].left : tree[id].right;
  }
  return tree[id].value;
}

}  // namespace

Eigen::VectorXd ForestModel::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    KahanSum s;
    for (const auto& tree : trees_) s.add(predict_tree(tree, X, i));
    double v = s.value() / static_cast<double>(trees_.size());
    if (task() == TaskKind::Probability) v = clip(v, clipLo_, clipHi_);
    out(i) = v;
  }
  return out;
}

std::shared_ptr<const ForestModel> fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                              const LearnerSpec& spec, TaskKind task,
                                              const FitOptions& opts) {
  if (X.rows() != y.size()) throw Error(ErrorCode::InvalidArgument, "forest: X and y row counts differ");
  if (X.rows() == 0) throw Error(ErrorCode::EmptySubset, "forest: no training rows");
  spec.validate();
  const auto n = static_cast<std::size_t>(X.rows());
  const int max_bins = static_cast<int>(spec.get("maxBins", 256));

  // Constant columns (the intercept, empty indicators) can never split.
  std::vector<BinnedFeature> features;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (X.col(j).maxCoeff() > X.col(j).minCoeff()) features.push_back(bin_feature(X, static_cast<int>(j), max_bins));
  }
  std::vector<std::uint16_t> codes(features.size() * n);
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& edges = features[f].edges;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = X(static_cast<Eigen::Index>(i), features[f].column);
      codes[f * n + i] = static_cast<std::uint16_t>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
    }
  }
  const double root_p = std::floor(std::sqrt(static_cast<double>(std::max<std::size_t>(features.size(), 1))));

  TreeParams params;
  params.mtry = std::max(1, static_cast<int>(std::floor(spec.get("mtryFraction", 1.0) * root_p)));
  params.minNodeSize = static_cast<std::size_t>(spec.get("minNodeSize", 5));
  params.maxDepth = static_cast<int>(spec.get("maxDepth", 0));
  const int num_trees = static_cast<int>(spec.get("numTrees", 100));
  const bool replace = spec.get("replace", 1.0) != 0.0;
  const double fraction = spec.get("sampleFraction", 1.0);

  const std::size_t draws = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(fraction * static_cast<double>(n))));
  std::vector<std::vector<TreeNode>> trees;
  trees.reserve(static_cast<std::size_t>(num_trees));
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (int t = 0; t < num_trees; ++t) {
    std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> rows;
    if (replace) {
      rows.resize(draws);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      rows = all;
      if (draws < n) {
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(draws);
      }
    }
    TreeBuilder builder(features, codes, n, y, params, rng);
    trees.push_back(builder.build(std::move(rows)));
  }
  return std::make_shared<ForestModel>(task, std::move(trees), opts.clipLo, opts.clipHi);
}

}  // namespace attelig::learners
