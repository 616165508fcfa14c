// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

// Closed-loop rollout, the L-step reconstruction error
//
//   E(t) = sum_{i=t+1..t+L} ||R^i - O^i||^2
//
// and the reference profile built from E(t) on attack-free data.

#ifndef HPC_SENTINEL_RECONSTRUCT_HPP_
#define HPC_SENTINEL_RECONSTRUCT_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "hpc_sentinel/io.hpp"
#include "hpc_sentinel/model.hpp"

namespace hpc_sentinel {

struct RolloutConfig {
  std::size_t lookahead = 10;  // L
  std::size_t warmup = 64;
  std::size_t stride = 10;

  void validate() const {
    if (lookahead < 1) throw ConfigError("lookahead must be >= 1");
    if (warmup < 1) throw ConfigError("warmup must be >= 1");
    if (stride < 1) throw ConfigError("stride must be >= 1");
  }

  friend bool operator==(const RolloutConfig&, const RolloutConfig&) = default;
};

/// Predicts the L frames following `history`, feeding each prediction back
/// as context for the next.
inline RowMatrix rollout_predict(const PredictorModel& model, FramesRef history, std::size_t lookahead) {
  if (static_cast<std::size_t>(history.rows()) < model.min_history()) {
    throw Error("rollout needs at least " + std::to_string(model.min_history()) + " history frames, got " +
                std::to_string(history.rows()));
  }
  if (static_cast<std::size_t>(history.cols()) != model.width()) throw DimensionError("history width mismatch");
  RowMatrix out(static_cast<Eigen::Index>(lookahead), history.cols());
  if (lookahead == 0) return out;

  if (model.kind() == ModelKind::Lstm) {
    const auto& p = model.lstm();
    auto state = LstmState<double>::zeros(p.hidden_size);
    Vector prediction;
    for (Eigen::Index t = 0; t < history.rows(); ++t) {
      auto r = lstm_step(p, state, history.row(t));
      state = std::move(r.state);
      prediction = std::move(r.prediction);
    }
    out.row(0) = prediction.transpose();
    for (std::size_t i = 1; i < lookahead; ++i) {
      auto r = lstm_step(p, state, prediction);
      state = std::move(r.state);
      prediction = std::move(r.prediction);
      out.row(static_cast<Eigen::Index>(i)) = prediction.transpose();
    }
    return out;
  }

  const auto& p = model.crbm();
  const auto k = static_cast<Eigen::Index>(p.order);
  RowMatrix context = history.bottomRows(k);
  for (std::size_t i = 0; i < lookahead; ++i) {
    const Vector next = crbm_predict(p, context, model.meanfield_iters);
    out.row(static_cast<Eigen::Index>(i)) = next.transpose();
    if (k > 1) context.topRows(k - 1) = RowMatrix(context.bottomRows(k - 1));
    context.row(k - 1) = next.transpose();
  }
  return out;
}

/// Sum over frames and channels of squared differences.
inline double reconstruction_error(FramesRef observed, FramesRef predicted) {
  if (observed.rows() != predicted.rows() || observed.cols() != predicted.cols()) {
    throw DimensionError("observed and predicted blocks differ in shape");
  }
  return (observed - predicted).squaredNorm();
}

/// Evaluation points t = warmup, warmup + stride, ... with t + L <= T.
inline std::size_t error_stream_count(std::size_t num_frames, const RolloutConfig& config) {
  if (num_frames < config.warmup + config.lookahead) return 0;
  return (num_frames - config.warmup - config.lookahead) / config.stride + 1;
}

/// E(t) at each evaluation point over model-space frames. Each E(t) conditions
/// on the `warmup` true frames before t. `Model` needs min_history() and an
/// ADL-visible rollout_predict(model, history, L).
template <typename Model>
std::vector<double> error_stream_frames(const Model& model, FramesRef frames, const RolloutConfig& config,
                                        unsigned threads = 1) {
  config.validate();
  if (config.warmup < model.min_history()) {
    throw ConfigError("warmup " + std::to_string(config.warmup) + " is shorter than the model's history need " +
                      std::to_string(model.min_history()));
  }
  const std::size_t count = error_stream_count(static_cast<std::size_t>(frames.rows()), config);
  std::vector<double> errors(count);
  const auto W = static_cast<Eigen::Index>(config.warmup);
  const auto L = static_cast<Eigen::Index>(config.lookahead);
  parallel_for(count, threads, [&](std::size_t i) {
    const auto t = static_cast<Eigen::Index>(config.warmup + i * config.stride);
    const RowMatrix predicted = rollout_predict(model, frames.middleRows(t - W, W), config.lookahead);
    errors[i] = reconstruction_error(frames.middleRows(t, L), predicted);
  });
  return errors;
}

/// error_stream on a raw trace: preprocesses with the model's stats first.
inline std::vector<double> error_stream(const PredictorModel& model, const Trace& raw, const RolloutConfig& config,
                                        unsigned threads = 1) {
  const Trace prepared = model.prepare(raw);
  return error_stream_frames(model, prepared.frames(), config, threads);
}

inline constexpr std::size_t kMinProfileSamples = 30;

/// Sorted clean reconstruction errors (the reference distribution).
struct ReferenceProfile {
  std::vector<double> samples;
  RolloutConfig rollout;
  std::string model_fingerprint;
  std::size_t source_length = 0;

  friend bool operator==(const ReferenceProfile&, const ReferenceProfile&) = default;
};

inline ReferenceProfile profile_from_errors(std::vector<double> errors, const RolloutConfig& config,
                                            std::string fingerprint, std::size_t source_length) {
  if (errors.size() < kMinProfileSamples) {
    throw Error("reference too short: " + std::to_string(errors.size()) + " errors, need " +
                std::to_string(kMinProfileSamples));
  }
  for (double e : errors) {
    if (!std::isfinite(e) || e < 0.0) throw Error("reference error samples must be finite and non-negative");
  }
  std::sort(errors.begin(), errors.end());
  return ReferenceProfile{std::move(errors), config, std::move(fingerprint), source_length};
}

inline ReferenceProfile build_profile(const PredictorModel& model, const Trace& clean_raw, const RolloutConfig& config,
                                      unsigned threads = 1) {
  return profile_from_errors(error_stream(model, clean_raw, config, threads), config, model_fingerprint(model),
                             clean_raw.num_frames());
}

inline constexpr std::string_view kProfileMagic = "# hpc-sentinel-profile v1";

inline std::string serialize_profile(const ReferenceProfile& p) {
  std::string out;
  out += kProfileMagic;
  out += '\n';
  out += "model_fingerprint=" + p.model_fingerprint + '\n';
  out += "lookahead=" + std::to_string(p.rollout.lookahead) + '\n';
  out += "warmup=" + std::to_string(p.rollout.warmup) + '\n';
  out += "stride=" + std::to_string(p.rollout.stride) + '\n';
  out += "source_length=" + std::to_string(p.source_length) + '\n';
  out += "samples=" + std::to_string(p.samples.size()) + '\n';
  for (double e : p.samples) out += format_double(e) + '\n';
  return out;
}

inline ReferenceProfile parse_profile(std::string_view text) {
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || trim(line) != kProfileMagic) {
    throw IngestionError(1, "missing '# hpc-sentinel-profile v1' header");
  }
  auto expect = [&](std::string_view key) -> std::string_view {
    if (!reader.next(line)) throw IngestionError(reader.line_no(), "truncated profile header");
    auto eq = line.find('=');
    if (eq == std::string_view::npos || line.substr(0, eq) != key) {
      throw IngestionError(reader.line_no(), "expected '" + std::string(key) + "='");
    }
    return line.substr(eq + 1);
  };
  auto as_size = [&](std::string_view v) {
    std::size_t out = 0;
    v = trim(v);
    if (std::from_chars(v.data(), v.data() + v.size(), out).ec != std::errc{}) {
      throw IngestionError(reader.line_no(), "expected an integer");
    }
    return out;
  };
  ReferenceProfile p;
  p.model_fingerprint = std::string(trim(expect("model_fingerprint")));
  p.rollout.lookahead = as_size(expect("lookahead"));
  p.rollout.warmup = as_size(expect("warmup"));
  p.rollout.stride = as_size(expect("stride"));
  p.source_length = as_size(expect("source_length"));
  const std::size_t n = as_size(expect("samples"));
  p.samples.reserve(n);
  while (reader.next(line)) {
    if (trim(line).empty()) continue;
    double v = 0.0;
    if (!parse_double(line, v) || !std::isfinite(v) || v < 0.0) {
      throw IngestionError(reader.line_no(), "malformed error sample");
    }
    if (!p.samples.empty() && v < p.samples.back()) throw IngestionError(reader.line_no(), "samples are not sorted");
    p.samples.push_back(v);
  }
  if (p.samples.size() != n) throw IngestionError("profile declares " + std::to_string(n) + " samples, found " +
                                                  std::to_string(p.samples.size()));
  if (n < kMinProfileSamples) throw IngestionError("reference too short");
  return p;
}

inline void save_profile(const ReferenceProfile& p, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_profile(p));
}

inline ReferenceProfile load_profile(const std::filesystem::path& path) { return parse_profile(read_file(path)); }

/// Teacher-forced one-step predictions. Row r predicts frame
/// `model.min_history() + r`; the LSTM carries its state across the whole
/// trace, the CRBM conditions on the preceding k frames.
inline RowMatrix one_step_predictions(const PredictorModel& model, FramesRef frames) {
  const auto start = static_cast<Eigen::Index>(model.min_history());
  if (frames.rows() <= start) return RowMatrix(0, frames.cols());
  RowMatrix out(frames.rows() - start, frames.cols());
  if (model.kind() == ModelKind::Lstm) {
    const auto& p = model.lstm();
    auto state = LstmState<double>::zeros(p.hidden_size);
    for (Eigen::Index t = 0; t + 1 < frames.rows(); ++t) {
      auto r = lstm_step(p, state, frames.row(t));
      state = std::move(r.state);
      out.row(t) = r.prediction.transpose();
    }
    return out;
  }
  for (Eigen::Index t = start; t < frames.rows(); ++t) {
    out.row(t - start) = crbm_predict(model.crbm(), frames.middleRows(t - start, start), model.meanfield_iters).transpose();
  }
  return out;
}

inline constexpr double kSnrMseFloor = 1e-12;
inline constexpr double kSnrCapDb = 120.0;

/// Channel-averaged 10*log10(Var(observed_c) / MSE_c) in dB. Zero-variance
/// channels are skipped with a warning.
inline double snr(FramesRef observed, FramesRef predicted) {
  if (observed.rows() != predicted.rows() || observed.cols() != predicted.cols()) {
    throw DimensionError("observed and predicted frames are not aligned");
  }
  if (observed.rows() < 2) throw Error("snr needs at least 2 frames");
  const double n = static_cast<double>(observed.rows());
  double total = 0.0;
  std::size_t used = 0;
  for (Eigen::Index c = 0; c < observed.cols(); ++c) {
    const auto col = observed.col(c);
    const double mean = col.sum() / n;
    const double var = (col.array() - mean).square().sum() / n;
    if (!(var > 0.0)) {
      warn("snr: channel " + std::to_string(c) + " has zero variance; skipped");
      continue;
    }
    const double mse = std::max((col - predicted.col(c)).squaredNorm() / n, kSnrMseFloor);
    total += std::min(10.0 * std::log10(var / mse), kSnrCapDb);
    ++used;
  }
  if (used == 0) throw Error("snr: every channel has zero variance");
  return total / static_cast<double>(used);
}

}  // namespace hpc_sentinel

#endif  // HPC_SENTINEL_RECONSTRUCT_HPP_
