#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "heartfl/dataset.hpp"
#include "heartfl/error.hpp"
#include "heartfl/models/model.hpp"
#include "heartfl/parallel.hpp"
#include "heartfl/random.hpp"

// Shapley-value attribution over feature coalitions. A coalition is a
// bitmask over the p features; bit i set means feature i is present.

namespace heartfl {

using Coalition = std::uint64_t;

inline constexpr std::size_t kMaxExactFeatures = 20;

inline Coalition full_coalition(std::size_t p) {
  return p >= 64 ? ~Coalition{0} : (Coalition{1} << p) - 1;
}

// Set-function over coalitions. Built either from a trained model or from
// an arbitrary callable (used by the property tests).
class ValueFunction {
 public:
  enum class Mode { kInstanceMarginal, kMaskedAccuracy, kCustom };

  ValueFunction(std::size_t p, std::function<double(Coalition)> fn)
      : mode_(Mode::kCustom), p_(p), fn_(std::move(fn)) {}

  // f(S) = mean over background rows b of decision_value on the vector that
  // takes features in S from x and the rest from b.
  static ValueFunction instance_marginal(const TrainedModel& model, const TabularDataset& background,
                                         std::vector<double> x) {
    if (background.empty()) throw ContractError("background set is empty");
    if (x.size() != model.dim() || background.dim() != model.dim())
      throw ContractError("instance or background width does not match the model");
    const std::size_t p = x.size();
    auto fn = [&model, &background, x = std::move(x), p](Coalition s) {
      std::vector<double> hybrid(p);
      double total = 0.0;
      for (std::size_t b = 0; b < background.size(); ++b) {
        const auto row = background.row(b);
        for (std::size_t j = 0; j < p; ++j) hybrid[j] = (s >> j) & 1U ? x[j] : row[j];
        total += decision_value(model, hybrid);
      }
      return total / static_cast<double>(background.size());
    };
    ValueFunction vf(p, std::move(fn));
    vf.mode_ = Mode::kInstanceMarginal;
    return vf;
  }

  // f(S) = accuracy on `test` with features outside S replaced by the
  // background column means.
  static ValueFunction masked_accuracy(const TrainedModel& model, const TabularDataset& test,
                                       const TabularDataset& background) {
    if (background.empty()) throw ContractError("background set is empty");
    if (test.empty()) throw ContractError("test set is empty");
    const std::size_t p = model.dim();
    std::vector<double> means(p, 0.0);
    for (std::size_t b = 0; b < background.size(); ++b)
      for (std::size_t j = 0; j < p; ++j) means[j] += background.row(b)[j];
    for (auto& m : means) m /= static_cast<double>(background.size());
    auto fn = [&model, &test, means = std::move(means), p](Coalition s) {
      std::vector<double> masked(p);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto row = test.row(i);
        for (std::size_t j = 0; j < p; ++j) masked[j] = (s >> j) & 1U ? row[j] : means[j];
        hits += predict(model, masked) == test.labels[i];
      }
      return static_cast<double>(hits) / static_cast<double>(test.size());
    };
    ValueFunction vf(p, std::move(fn));
    vf.mode_ = Mode::kMaskedAccuracy;
    return vf;
  }

  double operator()(Coalition s) const { return fn_(s); }
  std::size_t feature_count() const { return p_; }
  Mode mode() const { return mode_; }

 private:
  Mode mode_;
  std::size_t p_;
  std::function<double(Coalition)> fn_;
};

// Exact Shapley values by enumerating all 2^p coalitions. Each coalition is
// evaluated exactly once; `evaluations`, when given, receives that count.
template <typename F>
std::vector<double> exact_shapley(const F& f, std::size_t p, std::size_t* evaluations = nullptr) {
  if (p > kMaxExactFeatures)
    throw EnumerationLimitError("exact enumeration supports at most " +
                                std::to_string(kMaxExactFeatures) + " features, got " + std::to_string(p));
  const std::size_t n_sets = std::size_t{1} << p;
  std::vector<double> value(n_sets);
  for (std::size_t s = 0; s < n_sets; ++s) value[s] = f(static_cast<Coalition>(s));
  if (evaluations) *evaluations = n_sets;

  // weight[s] = s! (p - s - 1)! / p!, computed as a running product.
  std::vector<double> weight(p, 0.0);
  if (p > 0) {
    weight[0] = 1.0 / static_cast<double>(p);
    for (std::size_t s = 1; s < p; ++s)
      weight[s] = weight[s - 1] * static_cast<double>(s) / static_cast<double>(p - s);
  }
  std::vector<double> phi(p, 0.0);
  for (std::size_t s = 0; s < n_sets; ++s) {
    const auto size = static_cast<std::size_t>(std::popcount(static_cast<std::uint64_t>(s)));
    for (std::size_t i = 0; i < p; ++i) {
      if ((s >> i) & 1U) continue;
      phi[i] += weight[size] * (value[s | (std::size_t{1} << i)] - value[s]);
    }
  }
  return phi;
}

inline std::vector<double> exact_shapley(const ValueFunction& vf, std::size_t* evaluations = nullptr) {
  return exact_shapley(vf, vf.feature_count(), evaluations);
}

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// Shapley kernel weight (M-1) / (C(M,k) k (M-k)). The empty and full
// coalitions have infinite weight and are returned as nullopt; kernel_shap
// enforces them as exact constraints instead.
inline std::optional<double> kernel_weight(std::size_t m, std::size_t k) {
  if (k > m) throw ContractError("coalition size exceeds feature count");
  if (k == 0 || k == m) return std::nullopt;
  return static_cast<double>(m - 1) /
         (binomial(m, k) * static_cast<double>(k) * static_cast<double>(m - k));
}

namespace detail {

// Weighted least squares for the additive surrogate
//   f(z) ~ f(0) + sum_j z_j phi_j   with   sum_j phi_j = f(full) - f(0),
// solved by eliminating the last coefficient.
inline std::vector<double> solve_kernel_regression(std::span<const Coalition> coalitions,
                                                   std::span<const double> weights,
                                                   std::span<const double> values, std::size_t p,
                                                   double f_empty, double f_full) {
  const double total = f_full - f_empty;
  if (p == 1) return {total};
  const auto rows = static_cast<Eigen::Index>(coalitions.size());
  const auto cols = static_cast<Eigen::Index>(p - 1);
  Eigen::MatrixXd a(rows, cols);
  Eigen::VectorXd b(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Coalition z = coalitions[static_cast<std::size_t>(r)];
    const double sw = std::sqrt(weights[static_cast<std::size_t>(r)]);
    const double z_last = static_cast<double>((z >> (p - 1)) & 1U);
    for (Eigen::Index j = 0; j < cols; ++j)
      a(r, j) = sw * (static_cast<double>((z >> j) & 1U) - z_last);
    b(r) = sw * (values[static_cast<std::size_t>(r)] - f_empty - z_last * total);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < cols) {
    std::vector<std::size_t> degenerate;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < cols; ++k) degenerate.push_back(static_cast<std::size_t>(perm(k)));
    std::sort(degenerate.begin(), degenerate.end());
    std::string names;
    for (std::size_t f : degenerate) names += (names.empty() ? "" : ", ") + std::to_string(f);
    throw RankDeficiencyError("kernel regression is rank deficient; degenerate features: " + names,
                              degenerate);
  }
  const Eigen::VectorXd beta = qr.solve(b);
  std::vector<double> phi(p);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    phi[static_cast<std::size_t>(j)] = beta(j);
    acc += beta(j);
  }
  phi[p - 1] = total - acc;
  return phi;
}

}  // namespace detail

// Kernel SHAP. When nsamples covers every proper non-empty coalition they
// are enumerated with their exact kernel weights; otherwise coalitions are
// drawn with probability proportional to the kernel (size first, then a
// uniform subset of that size) and weighted by their draw counts.
template <typename F>
std::vector<double> kernel_shap(const F& f, std::size_t p, std::size_t nsamples, std::uint64_t seed) {
  if (p == 0) return {};
  if (p > 62) throw EnumerationLimitError("kernel_shap supports at most 62 features");
  const double interior = std::ldexp(1.0, static_cast<int>(p)) - 2.0;
  // p + 2 samples, or every interior coalition when there are fewer.
  if (static_cast<double>(nsamples) < std::min(static_cast<double>(p + 2), interior))
    throw ContractError("kernel_shap needs at least min(p + 2, 2^p - 2) samples, got " +
                        std::to_string(nsamples));
  const double f_empty = f(Coalition{0});
  const double f_full = f(full_coalition(p));
  if (p == 1) return {f_full - f_empty};

  std::vector<Coalition> coalitions;
  std::vector<double> weights;
  if (static_cast<double>(nsamples) >= interior) {
    for (Coalition z = 1; z < full_coalition(p); ++z) {
      coalitions.push_back(z);
      weights.push_back(*kernel_weight(p, static_cast<std::size_t>(std::popcount(z))));
    }
  } else {
    // P(size = k) is proportional to C(M,k) * kernel_weight(M,k) = (M-1)/(k(M-k)).
    std::vector<double> size_cdf(p - 1);
    double acc = 0.0;
    for (std::size_t k = 1; k < p; ++k) {
      acc += static_cast<double>(p - 1) / (static_cast<double>(k) * static_cast<double>(p - k));
      size_cdf[k - 1] = acc;
    }
    Rng rng(seed);
    std::map<Coalition, double> counts;
    std::vector<std::size_t> idx(p);
    for (std::size_t s = 0; s < nsamples; ++s) {
      const double u = uniform01(rng) * acc;
      const std::size_t k =
          static_cast<std::size_t>(std::upper_bound(size_cdf.begin(), size_cdf.end(), u) - size_cdf.begin()) + 1;
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      // Partial Fisher-Yates: the first k slots form a uniform k-subset.
      Coalition z = 0;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_below(rng, p - i);
        std::swap(idx[i], idx[j]);
        z |= Coalition{1} << idx[i];
      }
      counts[z] += 1.0;
    }
    for (const auto& [z, c] : counts) {
      coalitions.push_back(z);
      weights.push_back(c);
    }
  }
  std::vector<double> values(coalitions.size());
  for (std::size_t i = 0; i < coalitions.size(); ++i) values[i] = f(coalitions[i]);
  return detail::solve_kernel_regression(coalitions, weights, values, p, f_empty, f_full);
}

inline std::vector<double> kernel_shap(const ValueFunction& vf, std::size_t nsamples, std::uint64_t seed) {
  return kernel_shap(vf, vf.feature_count(), nsamples, seed);
}

struct ShapReport {
  std::vector<std::string> features;         // schema order
  std::vector<std::vector<double>> phi;      // one attribution vector per instance
  std::vector<double> mean_abs;              // per feature
  std::vector<std::size_t> rank;             // per feature; 1 = most important
};

// Ranks by descending mean |phi|; equal values keep schema order.
inline std::vector<std::size_t> importance_ranks(std::span<const double> mean_abs) {
  std::vector<std::size_t> order(mean_abs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mean_abs[a] > mean_abs[b]; });
  std::vector<std::size_t> rank(mean_abs.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
  return rank;
}

inline ShapReport summarize_attributions(std::vector<std::string> features,
                                         std::vector<std::vector<double>> phi) {
  ShapReport rep;
  rep.features = std::move(features);
  const std::size_t p = rep.features.size();
  rep.mean_abs.assign(p, 0.0);
  for (const auto& v : phi)
    for (std::size_t j = 0; j < p; ++j) rep.mean_abs[j] += std::abs(v[j]);
  if (!phi.empty())
    for (auto& m : rep.mean_abs) m /= static_cast<double>(phi.size());
  rep.rank = importance_ranks(rep.mean_abs);
  rep.phi = std::move(phi);
  return rep;
}

// Draws `size` rows without replacement (all rows when size >= N).
inline TabularDataset sample_background(const TabularDataset& ds, std::size_t size, std::uint64_t seed) {
  if (size >= ds.size()) return ds;
  Rng rng(seed);
  auto idx = shuffled_indices(ds.size(), rng);
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return ds.take(idx);
}

// Exact per-instance Shapley values of decision_value over every row of
// `test`, marginalizing absent features over `background`.
inline ShapReport mean_abs_shap(const TrainedModel& model, const TabularDataset& test,
                                const TabularDataset& background, std::size_t threads = 0) {
  if (test.empty()) throw ContractError("no instances to explain");
  std::vector<std::vector<double>> phi(test.size());
  parallel_for(
      test.size(),
      [&](std::size_t i) {
        const auto row = test.row(i);
        const auto vf =
            ValueFunction::instance_marginal(model, background, std::vector<double>(row.begin(), row.end()));
        phi[i] = exact_shapley(vf);
      },
      threads);
  return summarize_attributions(test.schema.names(), std::move(phi));
}

}  // namespace heartfl
