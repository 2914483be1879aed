#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "heartfl/dataset.hpp"
#include "heartfl/error.hpp"
#include "heartfl/models/hyperparams.hpp"
#include "heartfl/random.hpp"

// Flat-parameter models trained by mini-batch (sub)gradient descent:
// logistic regression, a one-hidden-layer ReLU network, and a primal
// linear SVM. The same loss/gradient routines drive centralized training
// and the federated local steps.

namespace heartfl {

using ParamVector = std::vector<double>;
using GradientBatch = std::vector<double>;

// Parameter layout:
//   LR, SVM: [w_0 .. w_{p-1}, b]
//   NN1:     [W1 (hidden x p, row-major), b1 (hidden), w2 (hidden), b2]
struct DenseShape {
  Family family = Family::kLR;
  std::size_t inputs = 0;
  std::size_t hidden = 0;

  std::size_t param_count() const {
    if (family == Family::kNN1) return hidden * inputs + hidden + hidden + 1;
    return inputs + 1;
  }

  bool operator==(const DenseShape&) const = default;
};

// SVM objective per batch B drawn from a training set of size n:
//   ||w||^2 / (2 C n) + mean_{i in B} max(0, 1 - y_i (w.x_i + b)),  y in {-1,+1}
// Summed over an epoch of batches this is (1/(C n)) * (||w||^2/2 + C * sum hinge)
// up to the batch-count factor, i.e. the usual primal C-SVM. The bias is
// not regularized.
struct LossConfig {
  double svm_c = 1.0;
  std::size_t n_train = 1;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline DenseShape dense_shape(Family family, std::size_t inputs, std::size_t hidden = 0) {
  if (!is_differentiable(family))
    throw UnsupportedFamilyError(std::string(family_name(family)) +
                                 " is not trained by gradient steps");
  if (family == Family::kNN1 && hidden == 0) throw ConfigError("NN1 needs hidden_units > 0");
  return {family, inputs, family == Family::kNN1 ? hidden : 0};
}

// LR and SVM start from zero. NN1 weights are uniform in +-1/sqrt(fan_in).
inline ParamVector init_params(const DenseShape& shape, std::uint64_t seed) {
  ParamVector params(shape.param_count(), 0.0);
  if (shape.family != Family::kNN1) return params;
  Rng rng(seed);
  const double a1 = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(shape.inputs, 1)));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  const std::size_t first = shape.hidden * shape.inputs + shape.hidden;
  for (std::size_t i = 0; i < first; ++i) params[i] = uniform_real(rng, -a1, a1);
  for (std::size_t i = first; i < params.size(); ++i) params[i] = uniform_real(rng, -a2, a2);
  return params;
}

// Raw score: logit for LR/NN1, margin for SVM.
inline double dense_score(const DenseShape& shape, std::span<const double> params,
                          std::span<const double> x) {
  const std::size_t p = shape.inputs;
  if (shape.family != Family::kNN1) {
    double z = params[p];
    for (std::size_t j = 0; j < p; ++j) z += params[j] * x[j];
    return z;
  }
  const std::size_t h = shape.hidden;
  const double* w1 = params.data();
  const double* b1 = w1 + h * p;
  const double* w2 = b1 + h;
  double z = w2[h];
  for (std::size_t u = 0; u < h; ++u) {
    double a = b1[u];
    for (std::size_t j = 0; j < p; ++j) a += w1[u * p + j] * x[j];
    if (a > 0) z += w2[u] * a;
  }
  return z;
}

// Mean batch loss over `rows`; when `grad` is non-empty it receives the
// gradient (subgradient for the hinge and ReLU kinks) of that loss.
inline double batch_loss_and_gradient(const DenseShape& shape, std::span<const double> params,
                                      const TabularDataset& ds, std::span<const std::size_t> rows,
                                      const LossConfig& cfg, std::span<double> grad = {}) {
  const std::size_t p = shape.inputs;
  const bool want_grad = !grad.empty();
  if (params.size() != shape.param_count() || ds.dim() != p)
    throw ContractError("parameter or feature width does not match the model shape");
  if (want_grad) {
    if (grad.size() != params.size()) throw ContractError("gradient buffer has the wrong size");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  if (rows.empty()) return 0.0;
  const double inv_b = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;

  switch (shape.family) {
    case Family::kLR: {
      for (std::size_t r : rows) {
        const auto x = ds.row(r);
        const double y = ds.labels[r];
        const double z = dense_score(shape, params, x);
        loss += softplus(z) - y * z;
        if (want_grad) {
          const double dz = (sigmoid(z) - y) * inv_b;
          for (std::size_t j = 0; j < p; ++j) grad[j] += dz * x[j];
          grad[p] += dz;
        }
      }
      return loss * inv_b;
    }
    case Family::kSVM: {
      const double lambda = 1.0 / (cfg.svm_c * static_cast<double>(std::max<std::size_t>(cfg.n_train, 1)));
      double wsq = 0.0;
      for (std::size_t j = 0; j < p; ++j) wsq += params[j] * params[j];
      for (std::size_t r : rows) {
        const auto x = ds.row(r);
        const double y = ds.labels[r] > 0 ? 1.0 : -1.0;
        const double margin = y * dense_score(shape, params, x);
        if (margin < 1.0) {
          loss += 1.0 - margin;
          if (want_grad) {
            for (std::size_t j = 0; j < p; ++j) grad[j] -= y * x[j] * inv_b;
            grad[p] -= y * inv_b;
          }
        }
      }
      if (want_grad)
        for (std::size_t j = 0; j < p; ++j) grad[j] += lambda * params[j];
      return loss * inv_b + 0.5 * lambda * wsq;
    }
    case Family::kNN1: {
      const std::size_t h = shape.hidden;
      const double* w1 = params.data();
      const double* b1 = w1 + h * p;
      const double* w2 = b1 + h;
      std::vector<double> act(h);
      for (std::size_t r : rows) {
        const auto x = ds.row(r);
        const double y = ds.labels[r];
        double z = w2[h];
        for (std::size_t u = 0; u < h; ++u) {
          double a = b1[u];
          for (std::size_t j = 0; j < p; ++j) a += w1[u * p + j] * x[j];
          act[u] = a;
          if (a > 0) z += w2[u] * a;
        }
        loss += softplus(z) - y * z;
        if (!want_grad) continue;
        const double dz = (sigmoid(z) - y) * inv_b;
        double* gw1 = grad.data();
        double* gb1 = gw1 + h * p;
        double* gw2 = gb1 + h;
        gw2[h] += dz;
        for (std::size_t u = 0; u < h; ++u) {
          if (act[u] <= 0) continue;
          gw2[u] += dz * act[u];
          const double da = dz * w2[u];
          gb1[u] += da;
          for (std::size_t j = 0; j < p; ++j) gw1[u * p + j] += da * x[j];
        }
      }
      return loss * inv_b;
    }
    default:
      throw UnsupportedFamilyError(std::string(family_name(shape.family)) + " has no gradient");
  }
}

inline GradientBatch batch_gradient(const DenseShape& shape, std::span<const double> params,
                                    const TabularDataset& ds, std::span<const std::size_t> rows,
                                    const LossConfig& cfg) {
  GradientBatch g(params.size());
  batch_loss_and_gradient(shape, params, ds, rows, cfg, g);
  return g;
}

inline void check_finite(std::span<const double> v, const char* where) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite parameter after ") + where);
}

// Cycles through a seeded shuffle of the rows, reshuffling at each pass.
// A pass ends with a partial batch when the batch size does not divide n.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : rng_(seed), batch_(std::max<std::size_t>(batch_size, 1)), order_(n) {
    reshuffle();
  }

  std::span<const std::size_t> next() {
    if (order_.empty()) return {};
    if (pos_ >= order_.size()) reshuffle();
    const std::size_t len = std::min(batch_, order_.size() - pos_);
    std::span<const std::size_t> out(order_.data() + pos_, len);
    pos_ += len;
    return out;
  }

  bool at_pass_start() const { return pos_ == 0 || pos_ >= order_.size(); }

 private:
  void reshuffle() {
    order_ = shuffled_indices(order_.size(), rng_);
    pos_ = 0;
  }

  Rng rng_;
  std::size_t batch_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// Plain fixed-step mini-batch SGD for `epochs` full passes.
inline void sgd_epochs(const DenseShape& shape, ParamVector& params, const TabularDataset& train,
                       const Hyperparams& hp, std::uint64_t seed) {
  const LossConfig cfg{hp.c, train.size()};
  const std::size_t n = train.size();
  const std::size_t b = std::max<std::size_t>(hp.batch_size, 1);
  const std::size_t batches_per_epoch = (n + b - 1) / b;
  BatchStream stream(n, b, seed);
  GradientBatch g(params.size());
  for (std::size_t e = 0; e < hp.epochs; ++e) {
    for (std::size_t s = 0; s < batches_per_epoch; ++s) {
      batch_loss_and_gradient(shape, params, train, stream.next(), cfg, g);
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= hp.learning_rate * g[i];
    }
  }
  check_finite(params, "SGD training");
}

}  // namespace heartfl
