#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "heartfl/dataset.hpp"

namespace heartfl {

// Stores the training rows; predicts by Euclidean nearest-neighbor vote.
// Neighbors at equal distance are ordered by row index.
struct KnnModel {
  TabularDataset train;
  std::size_t k = 1;

  double value(std::span<const double> x) const {
    const std::size_t n = train.size();
    if (n == 0) return 0.0;
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = train.row(i);
      double d = 0.0;
      for (std::size_t j = 0; j < r.size(); ++j) d += (r[j] - x[j]) * (r[j] - x[j]);
      dist[i] = {d, i};
    }
    const std::size_t kk = std::min(std::max<std::size_t>(k, 1), n);
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    double ones = 0.0;
    for (std::size_t i = 0; i < kk; ++i) ones += train.labels[dist[i].second];
    return ones / static_cast<double>(kk);
  }
};

}  // namespace heartfl
