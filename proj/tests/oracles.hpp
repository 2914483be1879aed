#pragma once

// Independent reference computations shared by the unit and acceptance
// suites. Nothing here calls into the code path it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "heartfl/dataset.hpp"
#include "heartfl/interpret.hpp"
#include "heartfl/models/dense.hpp"

namespace oracle {

using heartfl::Coalition;

// Shapley values as the average marginal contribution over all p!
// orderings, enumerated with std::next_permutation.
inline std::vector<double> permutation_shapley(const std::function<double(Coalition)>& f, std::size_t p) {
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> phi(p, 0.0);
  double count = 0.0;
  do {
    Coalition s = 0;
    double prev = f(s);
    for (std::size_t i : order) {
      s |= Coalition{1} << i;
      const double cur = f(s);
      phi[i] += cur - prev;
      prev = cur;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& v : phi) v /= count;
  return phi;
}

// Random dense network on `p` features: labels, rows and parameters drawn
// from the standard library generators only.
struct GradientCase {
  heartfl::DenseShape shape;
  heartfl::TabularDataset data;
  std::vector<std::size_t> rows;
  heartfl::ParamVector params;
  heartfl::LossConfig loss;
};

inline GradientCase random_gradient_case(heartfl::Family family, std::uint64_t seed) {
  std::mt19937 gen(static_cast<std::uint32_t>(seed * 2654435761u + 17u));
  std::uniform_int_distribution<int> pdist(1, 6), hdist(1, 5), ndist(1, 8), bit(0, 1);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t p = static_cast<std::size_t>(pdist(gen));
  const std::size_t h = static_cast<std::size_t>(hdist(gen));
  std::vector<heartfl::Feature> feats;
  for (std::size_t j = 0; j < p; ++j) feats.push_back({"x" + std::to_string(j), heartfl::FeatureKind::kContinuous, j});
  GradientCase gc;
  gc.shape = heartfl::dense_shape(family, p, family == heartfl::Family::kNN1 ? h : 0);
  gc.data = heartfl::TabularDataset{heartfl::FeatureSchema(feats), {}, {}, {}};
  const std::size_t n = static_cast<std::size_t>(ndist(gen));
  std::vector<double> x(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = nd(gen);
    gc.data.push_back(x, bit(gen), heartfl::Center::kCleveland);
    gc.rows.push_back(i);
  }
  gc.params.resize(gc.shape.param_count());
  for (auto& v : gc.params) v = nd(gen);
  gc.loss = {std::uniform_real_distribution<double>(0.1, 10.0)(gen), n + static_cast<std::size_t>(ndist(gen))};
  return gc;
}

// True when some hinge margin or ReLU pre-activation lies within `gap` of
// its kink, where the loss is not differentiable.
inline bool near_kink(const GradientCase& gc, double gap) {
  const std::size_t p = gc.shape.inputs;
  for (std::size_t r : gc.rows) {
    const auto x = gc.data.row(r);
    if (gc.shape.family == heartfl::Family::kSVM) {
      double z = gc.params[p];
      for (std::size_t j = 0; j < p; ++j) z += gc.params[j] * x[j];
      const double y = gc.data.labels[r] > 0 ? 1.0 : -1.0;
      if (std::abs(y * z - 1.0) < gap) return true;
    } else if (gc.shape.family == heartfl::Family::kNN1) {
      for (std::size_t u = 0; u < gc.shape.hidden; ++u) {
        double a = gc.params[gc.shape.hidden * p + u];
        for (std::size_t j = 0; j < p; ++j) a += gc.params[u * p + j] * x[j];
        if (std::abs(a) < gap) return true;
      }
    }
  }
  return false;
}

// Max relative error between the analytic gradient and central differences
// with step h: |g - fd| / max(1, |g|, |fd|).
inline double gradient_check_error(const GradientCase& gc, double h) {
  const auto analytic = heartfl::batch_gradient(gc.shape, gc.params, gc.data, gc.rows, gc.loss);
  auto probe = gc.params;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = heartfl::batch_loss_and_gradient(gc.shape, probe, gc.data, gc.rows, gc.loss);
    probe[i] = orig - h;
    const double down = heartfl::batch_loss_and_gradient(gc.shape, probe, gc.data, gc.rows, gc.loss);
    probe[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  return worst;
}

// Runs `trials` random gradient checks per family; cases with a kink within
// 10h of a sample are redrawn. Returns the worst error seen.
inline double worst_gradient_error(heartfl::Family family, std::size_t trials, double h) {
  double worst = 0.0;
  std::uint64_t seed = 0;
  for (std::size_t t = 0; t < trials; ++seed) {
    const auto gc = random_gradient_case(family, seed);
    if (near_kink(gc, 10.0 * h)) continue;
    worst = std::max(worst, gradient_check_error(gc, h));
    ++t;
  }
  return worst;
}

}  // namespace oracle
