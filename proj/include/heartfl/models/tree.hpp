#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "heartfl/dataset.hpp"
#include "heartfl/random.hpp"

namespace heartfl {

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;         // fraction of class-1 training rows in the node
  std::size_t depth = 0;
  std::size_t samples = 0;

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double value(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf())
      i = static_cast<std::size_t>(x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left
                                                                              : nodes[i].right);
    return nodes[i].value;
  }

  std::size_t depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
  }
};

struct TreeOptions {
  std::optional<std::size_t> max_depth;
  // Features examined per node; 0 means all of them in index order.
  std::size_t max_features = 0;
};

namespace detail {

struct SplitCandidate {
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();  // n_left*gini_left + n_right*gini_right
};

// Best Gini split on one feature over `rows`. Candidate thresholds are the
// midpoints between consecutive distinct sorted values; the lowest threshold
// wins among equal impurities.
inline std::optional<SplitCandidate> best_split_on(const TabularDataset& ds,
                                                   std::span<const std::size_t> rows,
                                                   std::size_t feature,
                                                   std::vector<std::pair<double, int>>& scratch) {
  scratch.clear();
  for (std::size_t r : rows) scratch.emplace_back(ds.row(r)[feature], ds.labels[r]);
  std::sort(scratch.begin(), scratch.end());
  const double n = static_cast<double>(scratch.size());
  double total1 = 0;
  for (const auto& s : scratch) total1 += s.second;
  double left1 = 0;
  std::optional<SplitCandidate> best;
  for (std::size_t i = 0; i + 1 < scratch.size(); ++i) {
    left1 += scratch[i].second;
    if (scratch[i].first == scratch[i + 1].first) continue;
    const double nl = static_cast<double>(i + 1);
    const double nr = n - nl;
    const double l0 = nl - left1;
    const double r1 = total1 - left1;
    const double r0 = nr - r1;
    const double imp = (nl - (left1 * left1 + l0 * l0) / nl) + (nr - (r1 * r1 + r0 * r0) / nr);
    if (!best || imp < best->impurity - 1e-12)
      best = SplitCandidate{feature, 0.5 * (scratch[i].first + scratch[i + 1].first), imp};
  }
  return best;
}

class TreeBuilder {
 public:
  TreeBuilder(const TabularDataset& ds, TreeOptions opts, Rng* rng)
      : ds_(ds), opts_(opts), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    DecisionTree tree;
    grow(tree, rows, 0);
    return tree;
  }

 private:
  std::int32_t grow(DecisionTree& tree, std::span<std::size_t> rows, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    double ones = 0;
    for (std::size_t r : rows) ones += ds_.labels[r];
    {
      auto& node = tree.nodes.back();
      node.depth = depth;
      node.samples = rows.size();
      node.value = rows.empty() ? 0.0 : ones / static_cast<double>(rows.size());
    }
    const bool pure = ones == 0 || ones == static_cast<double>(rows.size());
    if (pure || rows.size() < 2 || (opts_.max_depth && depth >= *opts_.max_depth)) return id;

    const auto split = choose_split(rows);
    if (!split) return id;

    const auto mid = std::stable_partition(rows.begin(), rows.end(), [&](std::size_t r) {
      return ds_.row(r)[split->feature] <= split->threshold;
    });
    const auto n_left = static_cast<std::size_t>(mid - rows.begin());
    const std::int32_t l = grow(tree, rows.first(n_left), depth + 1);
    const std::int32_t r = grow(tree, rows.subspan(n_left), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<std::int32_t>(split->feature);
    node.threshold = split->threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  std::optional<SplitCandidate> choose_split(std::span<const std::size_t> rows) {
    const std::size_t p = ds_.dim();
    std::vector<std::size_t> order(p);
    for (std::size_t j = 0; j < p; ++j) order[j] = j;
    std::size_t budget = p;
    if (opts_.max_features > 0 && opts_.max_features < p && rng_) {
      shuffle(std::span<std::size_t>(order), *rng_);
      budget = opts_.max_features;
    }
    std::optional<SplitCandidate> best;
    std::size_t examined = 0;
    for (std::size_t k = 0; k < p; ++k) {
      // After the sampled budget, keep drawing features only until some
      // valid split exists.
      if (examined >= budget && best) break;
      const std::size_t j = order[k];
      ++examined;
      const auto cand = best_split_on(ds_, rows, j, scratch_);
      if (!cand) continue;
      if (!best || cand->impurity < best->impurity - 1e-12 ||
          (std::abs(cand->impurity - best->impurity) <= 1e-12 &&
           (cand->feature < best->feature ||
            (cand->feature == best->feature && cand->threshold < best->threshold))))
        best = cand;
    }
    return best;
  }

  const TabularDataset& ds_;
  TreeOptions opts_;
  Rng* rng_;
  std::vector<std::pair<double, int>> scratch_;
};

}  // namespace detail

// Greedy Gini tree on all rows of `train`. Ties between equally good
// splits go to the lowest feature index, then the lowest threshold.
inline DecisionTree fit_decision_tree(const TabularDataset& train,
                                      std::optional<std::size_t> max_depth) {
  std::vector<std::size_t> rows(train.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return detail::TreeBuilder(train, {max_depth, 0}, nullptr).build(std::move(rows));
}

struct RandomForest {
  std::vector<DecisionTree> trees;
  std::vector<std::uint64_t> tree_seeds;

  // Mean of the trees' leaf class-1 fractions.
  double value(std::span<const double> x) const {
    if (trees.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : trees) s += t.value(x);
    return s / static_cast<double>(trees.size());
  }
};

inline std::uint64_t forest_tree_seed(std::uint64_t run_seed, std::size_t tree_index) {
  return derive_seed(run_seed, 0x7265ULL, tree_index);
}

// Bagged trees: each tree sees a bootstrap sample and floor(sqrt(p))
// candidate features per node.
inline RandomForest fit_random_forest(const TabularDataset& train, std::size_t n_estimators,
                                      std::uint64_t seed) {
  RandomForest forest;
  const std::size_t n = train.size();
  const std::size_t m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(train.dim())))));
  for (std::size_t t = 0; t < n_estimators; ++t) {
    const std::uint64_t ts = forest_tree_seed(seed, t);
    Rng rng(ts);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = uniform_below(rng, n);
    forest.trees.push_back(detail::TreeBuilder(train, {std::nullopt, m}, &rng).build(std::move(rows)));
    forest.tree_seeds.push_back(ts);
  }
  return forest;
}

}  // namespace heartfl
