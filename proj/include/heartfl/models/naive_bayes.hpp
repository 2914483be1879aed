#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "heartfl/dataset.hpp"

namespace heartfl {

// Mixed naive Bayes: Gaussian likelihoods for continuous features and
// Laplace-smoothed frequency tables for categorical and binary features.
struct NaiveBayesModel {
  static constexpr double kVarianceFloor = 1e-9;

  struct Gaussian {
    std::array<double, 2> mean{};
    std::array<double, 2> var{};
  };
  struct Table {
    std::vector<double> values;                     // sorted distinct training values
    std::array<std::vector<double>, 2> log_prob;    // per class, aligned with values
    std::array<double, 2> log_unseen{};             // smoothed mass of an unseen value
  };

  std::array<double, 2> log_prior{};
  std::array<std::size_t, 2> class_count{};
  std::vector<FeatureKind> kinds;
  std::vector<Gaussian> gaussians;  // indexed by feature; unused for table features
  std::vector<Table> tables;        // indexed by feature; unused for Gaussian features

  double log_likelihood(int cls, std::span<const double> x) const {
    double ll = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (kinds[j] == FeatureKind::kContinuous) {
        const double m = gaussians[j].mean[cls];
        const double v = gaussians[j].var[cls];
        const double d = x[j] - m;
        ll += -0.5 * std::log(2.0 * M_PI * v) - d * d / (2.0 * v);
      } else {
        const auto& t = tables[j];
        const auto it = std::lower_bound(t.values.begin(), t.values.end(), x[j]);
        if (it != t.values.end() && *it == x[j])
          ll += t.log_prob[cls][static_cast<std::size_t>(it - t.values.begin())];
        else
          ll += t.log_unseen[cls];
      }
    }
    return ll;
  }

  // Posterior probability of class 1.
  double posterior(std::span<const double> x) const {
    if (class_count[1] == 0) return 0.0;
    if (class_count[0] == 0) return 1.0;
    const double l0 = log_prior[0] + log_likelihood(0, x);
    const double l1 = log_prior[1] + log_likelihood(1, x);
    const double mx = std::max(l0, l1);
    const double e0 = std::exp(l0 - mx);
    const double e1 = std::exp(l1 - mx);
    return e1 / (e0 + e1);
  }
};

inline NaiveBayesModel fit_naive_bayes(const TabularDataset& train, double alpha) {
  const std::size_t p = train.dim();
  NaiveBayesModel m;
  m.kinds.resize(p);
  m.gaussians.resize(p);
  m.tables.resize(p);
  for (std::size_t i = 0; i < train.size(); ++i) ++m.class_count[train.labels[i]];
  const double n = static_cast<double>(train.size());
  for (int c = 0; c < 2; ++c)
    m.log_prior[c] = m.class_count[c] ? std::log(static_cast<double>(m.class_count[c]) / n)
                                      : -std::numeric_limits<double>::infinity();

  for (std::size_t j = 0; j < p; ++j) {
    m.kinds[j] = train.schema[j].kind;
    if (m.kinds[j] == FeatureKind::kContinuous) {
      auto& g = m.gaussians[j];
      for (std::size_t i = 0; i < train.size(); ++i) g.mean[train.labels[i]] += train.row(i)[j];
      for (int c = 0; c < 2; ++c)
        if (m.class_count[c]) g.mean[c] /= static_cast<double>(m.class_count[c]);
      for (std::size_t i = 0; i < train.size(); ++i) {
        const double d = train.row(i)[j] - g.mean[train.labels[i]];
        g.var[train.labels[i]] += d * d;
      }
      for (int c = 0; c < 2; ++c) {
        if (m.class_count[c]) g.var[c] /= static_cast<double>(m.class_count[c]);
        g.var[c] = std::max(g.var[c], NaiveBayesModel::kVarianceFloor);
      }
      continue;
    }
    auto& t = m.tables[j];
    for (std::size_t i = 0; i < train.size(); ++i) t.values.push_back(train.row(i)[j]);
    std::sort(t.values.begin(), t.values.end());
    t.values.erase(std::unique(t.values.begin(), t.values.end()), t.values.end());
    const double k = static_cast<double>(t.values.size());
    std::array<std::vector<double>, 2> counts{std::vector<double>(t.values.size(), 0.0),
                                              std::vector<double>(t.values.size(), 0.0)};
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto it = std::lower_bound(t.values.begin(), t.values.end(), train.row(i)[j]);
      counts[train.labels[i]][static_cast<std::size_t>(it - t.values.begin())] += 1.0;
    }
    for (int c = 0; c < 2; ++c) {
      // One extra slot of smoothing mass is reserved for values unseen in training.
      const double denom = static_cast<double>(m.class_count[c]) + alpha * (k + 1.0);
      t.log_prob[c].resize(t.values.size());
      for (std::size_t v = 0; v < t.values.size(); ++v)
        t.log_prob[c][v] = std::log((counts[c][v] + alpha) / denom);
      t.log_unseen[c] = std::log(alpha / denom);
    }
  }
  return m;
}

}  // namespace heartfl
