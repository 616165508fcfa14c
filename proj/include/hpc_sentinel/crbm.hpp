// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

// Conditional RBM with unit-variance Gaussian visibles and Bernoulli hiddens.
// The k most recent frames shift both bias vectors linearly:
//
//   visible_bias_t = visible_bias + A * vec(history)
//   hidden_bias_t  = hidden_bias  + B * vec(history)
//
// where vec() concatenates the history frames oldest first.

#ifndef HPC_SENTINEL_CRBM_HPP_
#define HPC_SENTINEL_CRBM_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "hpc_sentinel/common.hpp"
#include "hpc_sentinel/lstm.hpp"
#include "hpc_sentinel/rng.hpp"

namespace hpc_sentinel {

struct CrbmParams {
  std::size_t n_visible = 0;
  std::size_t n_hidden = 0;
  std::size_t order = 1;  // history length k
  Matrix W;               // n_hidden x n_visible
  Vector visible_bias;    // n_visible
  Vector hidden_bias;     // n_hidden
  Matrix A;               // n_visible x (order * n_visible)
  Matrix B;               // n_hidden x (order * n_visible)

  static CrbmParams zeros(std::size_t n_visible, std::size_t n_hidden, std::size_t order) {
    if (order < 1) throw ConfigError("CRBM history order must be >= 1");
    CrbmParams p;
    p.n_visible = n_visible;
    p.n_hidden = n_hidden;
    p.order = order;
    const auto V = static_cast<Eigen::Index>(n_visible);
    const auto H = static_cast<Eigen::Index>(n_hidden);
    const auto K = static_cast<Eigen::Index>(order * n_visible);
    p.W = Matrix::Zero(H, V);
    p.visible_bias = Vector::Zero(V);
    p.hidden_bias = Vector::Zero(H);
    p.A = Matrix::Zero(V, K);
    p.B = Matrix::Zero(H, K);
    return p;
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f(std::string("W"), W.data(), W.rows(), W.cols());
    f(std::string("visible_bias"), visible_bias.data(), visible_bias.rows(), Eigen::Index{1});
    f(std::string("hidden_bias"), hidden_bias.data(), hidden_bias.rows(), Eigen::Index{1});
    f(std::string("A"), A.data(), A.rows(), A.cols());
    f(std::string("B"), B.data(), B.rows(), B.cols());
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<CrbmParams*>(this)->for_each_tensor(
        [&](const std::string& name, double* data, Eigen::Index rows, Eigen::Index cols) {
          f(name, static_cast<const double*>(data), rows, cols);
        });
  }

  bool all_finite() const {
    return W.allFinite() && visible_bias.allFinite() && hidden_bias.allFinite() && A.allFinite() && B.allFinite();
  }

  void check_dims() const {
    const auto V = static_cast<Eigen::Index>(n_visible);
    const auto H = static_cast<Eigen::Index>(n_hidden);
    const auto K = static_cast<Eigen::Index>(order * n_visible);
    if (order < 1) throw DimensionError("CRBM history order must be >= 1");
    if (W.rows() != H || W.cols() != V || visible_bias.size() != V || hidden_bias.size() != H || A.rows() != V ||
        A.cols() != K || B.rows() != H || B.cols() != K) {
      throw DimensionError("inconsistent CRBM tensor shapes");
    }
  }

  friend bool operator==(const CrbmParams& a, const CrbmParams& b) {
    return a.n_visible == b.n_visible && a.n_hidden == b.n_hidden && a.order == b.order && a.W == b.W &&
           a.visible_bias == b.visible_bias && a.hidden_bias == b.hidden_bias && a.A == b.A && a.B == b.B;
  }
};

/// History frames (rows, oldest first) flattened into one column.
inline Vector flatten_history(const CrbmParams& p, FramesRef history) {
  if (static_cast<std::size_t>(history.rows()) != p.order) {
    throw DimensionError("CRBM needs exactly " + std::to_string(p.order) + " history frames, got " +
                         std::to_string(history.rows()));
  }
  if (static_cast<std::size_t>(history.cols()) != p.n_visible) throw DimensionError("history frame width mismatch");
  Vector out(history.size());
  for (Eigen::Index t = 0; t < history.rows(); ++t) out.segment(t * history.cols(), history.cols()) = history.row(t);
  return out;
}

struct DynamicBiases {
  Vector visible;
  Vector hidden;
};

inline DynamicBiases dynamic_biases(const CrbmParams& p, FramesRef history) {
  const Vector hv = flatten_history(p, history);
  return DynamicBiases{p.visible_bias + p.A * hv, p.hidden_bias + p.B * hv};
}

inline Vector hidden_prob_given(const CrbmParams& p, const Vector& v, const Vector& hidden_dyn) {
  if (static_cast<std::size_t>(v.size()) != p.n_visible) throw DimensionError("visible vector width mismatch");
  // Kept strictly inside (0, 1) even where the logistic rounds to 0 or 1.
  static constexpr double lo = std::numeric_limits<double>::min();
  static constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  return (p.W * v + hidden_dyn).unaryExpr([](double x) { return std::clamp(sigmoid(x), lo, hi); });
}

inline Vector visible_mean_given(const CrbmParams& p, const Vector& h, const Vector& visible_dyn) {
  if (static_cast<std::size_t>(h.size()) != p.n_hidden) throw DimensionError("hidden vector width mismatch");
  return visible_dyn + p.W.transpose() * h;
}

/// p(h_i = 1 | v, history) for every hidden unit.
inline Vector hidden_prob(const CrbmParams& p, const Vector& v, FramesRef history) {
  return hidden_prob_given(p, v, dynamic_biases(p, history).hidden);
}

/// Mean of the unit-variance Gaussian p(v | h, history).
inline Vector visible_mean(const CrbmParams& p, const Vector& h, FramesRef history) {
  return visible_mean_given(p, h, dynamic_biases(p, history).visible);
}

/// Sampling policy backed by the portable stream.
struct RngSampler {
  Rng* rng;
  double hidden(double prob) { return rng->bernoulli(prob) ? 1.0 : 0.0; }
  double visible(double mean) { return rng->gaussian(mean, 1.0); }
};

/// Zero-variance hook: hiddens round their probability, visibles return the
/// mean.
struct MeanSampler {
  double hidden(double prob) { return prob >= 0.5 ? 1.0 : 0.0; }
  double visible(double mean) { return mean; }
};

/// One Gibbs sweep h ~ p(h | v), v' ~ p(v | h) given precomputed biases.
template <typename Sampler>
Vector gibbs_step_given(const CrbmParams& p, const Vector& v, const DynamicBiases& dyn, Sampler& sampler) {
  Vector h = hidden_prob_given(p, v, dyn.hidden);
  for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = sampler.hidden(h[i]);
  Vector out = visible_mean_given(p, h, dyn.visible);
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = sampler.visible(out[j]);
  return out;
}

template <typename Sampler>
Vector gibbs_step(const CrbmParams& p, const Vector& v, FramesRef history, Sampler& sampler) {
  return gibbs_step_given(p, v, dynamic_biases(p, history), sampler);
}

inline Vector gibbs_step(const CrbmParams& p, const Vector& v, FramesRef history, Rng& rng) {
  RngSampler sampler{&rng};
  return gibbs_step(p, v, history, sampler);
}

/// Deterministic mean-field prediction of the next frame: v starts at the
/// dynamic visible bias, then alternates h = p(h | v), v = E[v | h].
inline Vector crbm_predict(const CrbmParams& p, FramesRef history, int meanfield_iters = 10) {
  if (meanfield_iters < 1) throw ConfigError("meanfield_iters must be >= 1");
  const auto dyn = dynamic_biases(p, history);
  Vector v = dyn.visible;
  for (int it = 0; it < meanfield_iters; ++it) {
    const Vector h = hidden_prob_given(p, v, dyn.hidden);
    v = visible_mean_given(p, h, dyn.visible);
  }
  return v;
}

struct CdConfig {
  int cd_steps = 1;
  double learning_rate = 0.001;
  int epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t order = 8;
  std::size_t n_hidden = 50;
  double init_scale = 0.01;

  void validate() const {
    if (cd_steps < 1) throw ConfigError("cd_steps must be >= 1");
    // Zero is accepted so a run can be replayed without updates.
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (order < 1) throw ConfigError("order must be >= 1");
    if (n_hidden < 1) throw ConfigError("n_hidden must be >= 1");
  }
};

struct CrbmTrainResult {
  CrbmParams params;
  // Mean squared error per visible unit between each data frame and its
  // CD reconstruction mean, averaged over the epoch.
  std::vector<double> epoch_mse;
};

/// Contrastive-divergence training on every (k-frame history, next frame)
/// pair in the sequences. The negative phase runs `cd_steps` sampled Gibbs
/// sweeps; the final visible state is the reconstruction mean.
inline CrbmTrainResult cd_train(std::span<const RowMatrix> sequences, const CdConfig& config,
                                const EpochCallback& on_epoch = {}) {
  config.validate();
  if (sequences.empty()) throw Error("training set is empty");
  const auto width = sequences.front().cols();
  struct Pair {
    std::size_t seq;
    Eigen::Index t;  // index of the target frame
  };
  std::vector<Pair> pairs;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    if (sequences[s].cols() != width) throw DimensionError("training sequences differ in dimensionality");
    for (auto t = static_cast<Eigen::Index>(config.order); t < sequences[s].rows(); ++t) pairs.push_back({s, t});
  }
  if (pairs.empty()) throw Error("no training window supplies k history frames plus a target");

  Rng rng(config.seed);
  CrbmTrainResult result;
  auto& p = result.params;
  p = CrbmParams::zeros(static_cast<std::size_t>(width), config.n_hidden, config.order);
  for (auto* m : {&p.W, &p.A, &p.B}) {
    for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = rng.uniform(-config.init_scale, config.init_scale);
  }

  const auto V = static_cast<Eigen::Index>(p.n_visible);
  const auto H = static_cast<Eigen::Index>(p.n_hidden);
  const auto K = static_cast<Eigen::Index>(p.order * p.n_visible);
  RngSampler sampler{&rng};
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double sse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto nb = static_cast<Eigen::Index>(end - start);
      Matrix v0(V, nb), vn(V, nb), hist(K, nb), h0(H, nb), hn(H, nb);
      for (Eigen::Index b = 0; b < nb; ++b) {
        const auto& pr = pairs[order[start + static_cast<std::size_t>(b)]];
        const auto& seq = sequences[pr.seq];
        const auto k = static_cast<Eigen::Index>(p.order);
        hist.col(b) = flatten_history(p, seq.middleRows(pr.t - k, k));
        v0.col(b) = seq.row(pr.t).transpose();
        DynamicBiases dyn{p.visible_bias + p.A * hist.col(b), p.hidden_bias + p.B * hist.col(b)};
        const Vector data = v0.col(b);
        h0.col(b) = hidden_prob_given(p, data, dyn.hidden);
        Vector v = data;
        for (int step = 0; step < config.cd_steps; ++step) {
          Vector h = hidden_prob_given(p, v, dyn.hidden);
          for (Eigen::Index i = 0; i < H; ++i) h[i] = sampler.hidden(h[i]);
          v = visible_mean_given(p, h, dyn.visible);
          if (step + 1 < config.cd_steps) {
            for (Eigen::Index j = 0; j < V; ++j) v[j] = sampler.visible(v[j]);
          }
        }
        vn.col(b) = v;
        hn.col(b) = hidden_prob_given(p, v, dyn.hidden);
        sse += (data - v).squaredNorm();
      }
      if (config.learning_rate == 0.0) continue;
      const double step = config.learning_rate / static_cast<double>(nb);
      const Matrix dv = v0 - vn;
      const Matrix dh = h0 - hn;
      p.W.noalias() += step * (h0 * v0.transpose() - hn * vn.transpose());
      p.visible_bias += step * dv.rowwise().sum();
      p.hidden_bias += step * dh.rowwise().sum();
      p.A.noalias() += step * dv * hist.transpose();
      p.B.noalias() += step * dh * hist.transpose();
    }
    const double mse = sse / (static_cast<double>(pairs.size()) * static_cast<double>(V));
    if (!std::isfinite(mse) || !p.all_finite()) throw DivergenceError(epoch, "non-finite CRBM parameters");
    result.epoch_mse.push_back(mse);
    if (on_epoch) on_epoch(epoch, mse);
  }
  return result;
}

}  // namespace hpc_sentinel

#endif  // HPC_SENTINEL_CRBM_HPP_
