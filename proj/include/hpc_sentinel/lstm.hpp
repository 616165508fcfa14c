// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

// Single-layer LSTM next-frame predictor with a linear readout, trained by
// mini-batch SGD on the mean one-step squared prediction error
//
//   loss = 1/N * sum_i 1/(T_i - 1) * sum_{t=2..T_i} ||S_i^t - O_i^t||^2
//
// with teacher forcing: the observed frame S_i^t drives step t and the
// readout of h_t is the prediction O_i^{t+1}.

#ifndef HPC_SENTINEL_LSTM_HPP_
#define HPC_SENTINEL_LSTM_HPP_

#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "hpc_sentinel/common.hpp"
#include "hpc_sentinel/rng.hpp"

namespace hpc_sentinel {

enum Gate : int { kForgetGate = 0, kInputGate = 1, kOutputGate = 2, kCellGate = 3 };
inline constexpr int kNumGates = 4;

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename Scalar = double>
struct LstmParams {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::array<Mat, kNumGates> W;  // hidden x input
  std::array<Mat, kNumGates> U;  // hidden x hidden
  std::array<Vec, kNumGates> b;
  Mat W_y;  // input x hidden
  Vec b_y;

  static LstmParams zeros(std::size_t input_size, std::size_t hidden_size) {
    LstmParams p;
    p.input_size = input_size;
    p.hidden_size = hidden_size;
    const auto I = static_cast<Eigen::Index>(input_size);
    const auto H = static_cast<Eigen::Index>(hidden_size);
    for (int g = 0; g < kNumGates; ++g) {
      p.W[g] = Mat::Zero(H, I);
      p.U[g] = Mat::Zero(H, H);
      p.b[g] = Vec::Zero(H);
    }
    p.W_y = Mat::Zero(I, H);
    p.b_y = Vec::Zero(I);
    return p;
  }

  /// Visits every tensor in a fixed order (W_*, U_*, b_* per gate, then W_y,
  /// b_y). Serialization and flat-vector views rely on this order.
  template <typename F>
  void for_each_tensor(F&& f) {
    static constexpr const char* kGateNames[kNumGates] = {"f", "i", "o", "c"};
    for (int g = 0; g < kNumGates; ++g) {
      f(std::string("W_") + kGateNames[g], W[g].data(), W[g].rows(), W[g].cols());
      f(std::string("U_") + kGateNames[g], U[g].data(), U[g].rows(), U[g].cols());
      f(std::string("b_") + kGateNames[g], b[g].data(), b[g].rows(), Eigen::Index{1});
    }
    f(std::string("W_y"), W_y.data(), W_y.rows(), W_y.cols());
    f(std::string("b_y"), b_y.data(), b_y.rows(), Eigen::Index{1});
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<LstmParams*>(this)->for_each_tensor(
        [&](const std::string& name, Scalar* data, Eigen::Index rows, Eigen::Index cols) {
          f(name, static_cast<const Scalar*>(data), rows, cols);
        });
  }

  std::size_t num_parameters() const {
    const std::size_t I = input_size, H = hidden_size;
    return kNumGates * (H * I + H * H + H) + I * H + I;
  }

  std::vector<Scalar> flatten() const {
    std::vector<Scalar> out;
    out.reserve(num_parameters());
    for_each_tensor([&](const std::string&, const Scalar* d, Eigen::Index r, Eigen::Index c) {
      out.insert(out.end(), d, d + r * c);
    });
    return out;
  }

  void unflatten(std::span<const Scalar> flat) {
    if (flat.size() != num_parameters()) throw DimensionError("flat parameter vector has wrong length");
    std::size_t pos = 0;
    for_each_tensor([&](const std::string&, Scalar* d, Eigen::Index r, Eigen::Index c) {
      for (Eigen::Index k = 0; k < r * c; ++k) d[k] = flat[pos++];
    });
  }

  Scalar squared_norm() const {
    Scalar s = 0;
    for_each_tensor([&](const std::string&, const Scalar* d, Eigen::Index r, Eigen::Index c) {
      s += Eigen::Map<const Vec>(d, r * c).squaredNorm();
    });
    return s;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const std::string&, const Scalar* d, Eigen::Index r, Eigen::Index c) {
      ok = ok && Eigen::Map<const Vec>(d, r * c).allFinite();
    });
    return ok;
  }

  /// this += alpha * other
  void axpy(Scalar alpha, const LstmParams& other) {
    for (int g = 0; g < kNumGates; ++g) {
      W[g] += alpha * other.W[g];
      U[g] += alpha * other.U[g];
      b[g] += alpha * other.b[g];
    }
    W_y += alpha * other.W_y;
    b_y += alpha * other.b_y;
  }

  void scale(Scalar alpha) {
    for (int g = 0; g < kNumGates; ++g) {
      W[g] *= alpha;
      U[g] *= alpha;
      b[g] *= alpha;
    }
    W_y *= alpha;
    b_y *= alpha;
  }

  void check_dims() const {
    const auto I = static_cast<Eigen::Index>(input_size);
    const auto H = static_cast<Eigen::Index>(hidden_size);
    for (int g = 0; g < kNumGates; ++g) {
      if (W[g].rows() != H || W[g].cols() != I || U[g].rows() != H || U[g].cols() != H || b[g].size() != H) {
        throw DimensionError("inconsistent LSTM gate tensor shapes");
      }
    }
    if (W_y.rows() != I || W_y.cols() != H || b_y.size() != I) throw DimensionError("inconsistent readout shapes");
  }

  template <typename Other>
  LstmParams<Other> cast() const {
    LstmParams<Other> p;
    p.input_size = input_size;
    p.hidden_size = hidden_size;
    for (int g = 0; g < kNumGates; ++g) {
      p.W[g] = W[g].template cast<Other>();
      p.U[g] = U[g].template cast<Other>();
      p.b[g] = b[g].template cast<Other>();
    }
    p.W_y = W_y.template cast<Other>();
    p.b_y = b_y.template cast<Other>();
    return p;
  }

  friend bool operator==(const LstmParams& a, const LstmParams& b) {
    return a.input_size == b.input_size && a.hidden_size == b.hidden_size && a.flatten() == b.flatten();
  }
};

template <typename Scalar = double>
struct LstmState {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vec c;
  Vec h;

  static LstmState zeros(std::size_t hidden_size) {
    const auto H = static_cast<Eigen::Index>(hidden_size);
    return LstmState{Vec::Zero(H), Vec::Zero(H)};
  }
};

template <typename Scalar>
struct LstmStepResult {
  LstmState<Scalar> state;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> prediction;
};

/// One recurrence step on input frame `x`, followed by the readout.
template <typename Scalar, typename Derived>
LstmStepResult<Scalar> lstm_step(const LstmParams<Scalar>& p, const LstmState<Scalar>& state,
                                 const Eigen::MatrixBase<Derived>& x) {
  using Vec = typename LstmParams<Scalar>::Vec;
  const auto H = static_cast<Eigen::Index>(p.hidden_size);
  if (x.size() != static_cast<Eigen::Index>(p.input_size)) throw DimensionError("frame width does not match LSTM input");
  if (state.c.size() != H || state.h.size() != H) throw DimensionError("state width does not match LSTM hidden size");
  const Vec xv = x.derived().template cast<Scalar>().reshaped();
  auto pre = [&](int g) -> Vec { return p.W[g] * xv + p.U[g] * state.h + p.b[g]; };
  const Vec f = pre(kForgetGate).unaryExpr([](Scalar v) { return sigmoid(v); });
  const Vec i = pre(kInputGate).unaryExpr([](Scalar v) { return sigmoid(v); });
  const Vec o = pre(kOutputGate).unaryExpr([](Scalar v) { return sigmoid(v); });
  const Vec g = pre(kCellGate).array().tanh();
  LstmStepResult<Scalar> out;
  out.state.c = f.cwiseProduct(state.c) + i.cwiseProduct(g);
  out.state.h = o.cwiseProduct(out.state.c.array().tanh().matrix());
  out.prediction = p.W_y * out.state.h + p.b_y;
  return out;
}

/// Runs the history from the zero state; returns the prediction for the frame
/// after the last one in `history` (frames are rows).
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> predict_next(const LstmParams<Scalar>& p,
                                                      const Eigen::MatrixBase<Derived>& history) {
  if (history.rows() == 0) throw Error("predict_next needs a non-empty history");
  auto state = LstmState<Scalar>::zeros(p.hidden_size);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> prediction;
  for (Eigen::Index t = 0; t < history.rows(); ++t) {
    auto r = lstm_step(p, state, history.row(t));
    state = std::move(r.state);
    prediction = std::move(r.prediction);
  }
  return prediction;
}

/// Mean one-step squared error over the sequence set, teacher forced.
template <typename Scalar>
Scalar sequence_loss(const LstmParams<Scalar>& p, std::span<const RowMatrix> sequences) {
  if (sequences.empty()) return Scalar(0);
  Scalar total = 0;
  for (const auto& seq : sequences) {
    if (seq.rows() < 2) throw Error("each training sequence needs at least 2 frames");
    auto state = LstmState<Scalar>::zeros(p.hidden_size);
    Scalar seq_total = 0;
    for (Eigen::Index t = 0; t + 1 < seq.rows(); ++t) {
      auto r = lstm_step(p, state, seq.row(t));
      state = std::move(r.state);
      seq_total += (seq.row(t + 1).transpose().template cast<Scalar>() - r.prediction).squaredNorm();
    }
    total += seq_total / static_cast<Scalar>(seq.rows() - 1);
  }
  return total / static_cast<Scalar>(sequences.size());
}

/// Exact gradient of sequence_loss by backpropagation through time.
template <typename Scalar>
LstmParams<Scalar> gradient(const LstmParams<Scalar>& p, std::span<const RowMatrix> sequences) {
  using Vec = typename LstmParams<Scalar>::Vec;
  auto grad = LstmParams<Scalar>::zeros(p.input_size, p.hidden_size);
  if (sequences.empty()) return grad;
  const auto H = static_cast<Eigen::Index>(p.hidden_size);

  struct StepCache {
    Vec x, h_prev, c_prev, gate[kNumGates], c, tanh_c, h, pred;
  };
  std::vector<StepCache> cache;

  for (const auto& seq : sequences) {
    if (seq.rows() < 2) throw Error("each training sequence needs at least 2 frames");
    const Eigen::Index steps = seq.rows() - 1;
    const Scalar weight =
        Scalar(1) / (static_cast<Scalar>(sequences.size()) * static_cast<Scalar>(steps));
    cache.resize(static_cast<std::size_t>(steps));

    Vec h = Vec::Zero(H), c = Vec::Zero(H);
    for (Eigen::Index t = 0; t < steps; ++t) {
      auto& s = cache[static_cast<std::size_t>(t)];
      s.x = seq.row(t).transpose().template cast<Scalar>();
      s.h_prev = h;
      s.c_prev = c;
      for (int g = 0; g < kNumGates; ++g) {
        Vec z = p.W[g] * s.x + p.U[g] * h + p.b[g];
        if (g == kCellGate) {
          s.gate[g] = z.array().tanh();
        } else {
          s.gate[g] = z.unaryExpr([](Scalar v) { return sigmoid(v); });
        }
      }
      s.c = s.gate[kForgetGate].cwiseProduct(c) + s.gate[kInputGate].cwiseProduct(s.gate[kCellGate]);
      s.tanh_c = s.c.array().tanh();
      s.h = s.gate[kOutputGate].cwiseProduct(s.tanh_c);
      s.pred = p.W_y * s.h + p.b_y;
      h = s.h;
      c = s.c;
    }

    Vec dh_next = Vec::Zero(H), dc_next = Vec::Zero(H);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const auto& s = cache[static_cast<std::size_t>(t)];
      const Vec target = seq.row(t + 1).transpose().template cast<Scalar>();
      const Vec d_pred = Scalar(2) * weight * (s.pred - target);
      grad.W_y.noalias() += d_pred * s.h.transpose();
      grad.b_y += d_pred;
      const Vec dh = p.W_y.transpose() * d_pred + dh_next;

      const auto& f = s.gate[kForgetGate];
      const auto& i = s.gate[kInputGate];
      const auto& o = s.gate[kOutputGate];
      const auto& g = s.gate[kCellGate];
      const Vec dc = dh.cwiseProduct(o).cwiseProduct((Scalar(1) - s.tanh_c.array().square()).matrix()) + dc_next;

      Vec dz[kNumGates];
      dz[kOutputGate] = dh.cwiseProduct(s.tanh_c).cwiseProduct((o.array() * (Scalar(1) - o.array())).matrix());
      dz[kForgetGate] = dc.cwiseProduct(s.c_prev).cwiseProduct((f.array() * (Scalar(1) - f.array())).matrix());
      dz[kInputGate] = dc.cwiseProduct(g).cwiseProduct((i.array() * (Scalar(1) - i.array())).matrix());
      dz[kCellGate] = dc.cwiseProduct(i).cwiseProduct((Scalar(1) - g.array().square()).matrix());

      dh_next.setZero();
      for (int k = 0; k < kNumGates; ++k) {
        grad.W[k].noalias() += dz[k] * s.x.transpose();
        grad.U[k].noalias() += dz[k] * s.h_prev.transpose();
        grad.b[k] += dz[k];
        dh_next.noalias() += p.U[k].transpose() * dz[k];
      }
      dc_next = dc.cwiseProduct(f);
    }
  }
  return grad;
}

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 20;
  std::size_t sequence_length = 64;
  std::size_t batch_size = 16;
  double gradient_clip = 5.0;
  std::uint64_t seed = 0;
  double init_scale = 0.08;
  std::size_t hidden_size = 64;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (sequence_length < 2) throw ConfigError("sequence_length must be >= 2");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(gradient_clip > 0.0)) throw ConfigError("gradient_clip must be > 0");
    if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
    if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  }
};

/// Weights uniform in [-scale, scale], biases zero except the forget gate at +1.
template <typename Scalar = double>
LstmParams<Scalar> init_lstm(std::size_t input_size, std::size_t hidden_size, double scale, Rng& rng) {
  auto p = LstmParams<Scalar>::zeros(input_size, hidden_size);
  auto fill = [&](auto& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<Scalar>(rng.uniform(-scale, scale));
  };
  for (int g = 0; g < kNumGates; ++g) {
    fill(p.W[g]);
    fill(p.U[g]);
  }
  fill(p.W_y);
  p.b[kForgetGate].setConstant(Scalar(1));
  return p;
}

template <typename Scalar = double>
struct LstmTrainResult {
  LstmParams<Scalar> params;
  std::vector<double> epoch_losses;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Mini-batch SGD with global-norm gradient clipping. Sequence order is
/// reshuffled each epoch from the seeded stream; the reported loss is the
/// full-set sequence_loss after the epoch's updates.
template <typename Scalar = double>
LstmTrainResult<Scalar> train_lstm(std::span<const RowMatrix> sequences, const TrainConfig& config,
                                   const EpochCallback& on_epoch = {}) {
  config.validate();
  if (sequences.empty()) throw Error("training set is empty");
  const auto width = sequences.front().cols();
  for (const auto& s : sequences) {
    if (s.cols() != width) throw DimensionError("training sequences differ in dimensionality");
    if (s.rows() < 2) throw Error("each training sequence needs at least 2 frames");
  }
  Rng rng(config.seed);
  LstmTrainResult<Scalar> result;
  result.params =
      init_lstm<Scalar>(static_cast<std::size_t>(width), config.hidden_size, config.init_scale, rng);
  auto& p = result.params;

  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<RowMatrix> batch;
  const auto lr = static_cast<Scalar>(config.learning_rate);
  const auto clip = static_cast<Scalar>(config.gradient_clip);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(sequences[order[k]]);
      auto g = gradient(p, std::span<const RowMatrix>(batch));
      const Scalar norm = std::sqrt(g.squared_norm());
      if (!std::isfinite(static_cast<double>(norm))) throw DivergenceError(epoch, "non-finite gradient");
      if (norm > clip) g.scale(clip / norm);
      p.axpy(-lr, g);
    }
    const double loss = static_cast<double>(sequence_loss(p, sequences));
    if (!std::isfinite(loss) || !p.all_finite()) throw DivergenceError(epoch, "non-finite loss");
    result.epoch_losses.push_back(loss);
    if (on_epoch) on_epoch(epoch, loss);
  }
  return result;
}

/// Cuts a (normalized) frame matrix into consecutive sequences of `length`
/// frames, `stride` apart. A short tail is dropped.
inline std::vector<RowMatrix> chunk_sequences(const RowMatrix& frames, std::size_t length, std::size_t stride) {
  if (length < 2 || stride < 1) throw ConfigError("sequence length must be >= 2 and stride >= 1");
  std::vector<RowMatrix> out;
  const auto T = static_cast<std::size_t>(frames.rows());
  for (std::size_t s = 0; s + length <= T; s += stride) {
    out.emplace_back(frames.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(length)));
  }
  return out;
}

}  // namespace hpc_sentinel

#endif  // HPC_SENTINEL_LSTM_HPP_
