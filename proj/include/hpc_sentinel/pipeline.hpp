// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

#ifndef HPC_SENTINEL_PIPELINE_HPP_
#define HPC_SENTINEL_PIPELINE_HPP_

#include <vector>

#include "hpc_sentinel/model.hpp"

namespace hpc_sentinel {

struct PredictorConfig {
  ModelKind kind = ModelKind::Lstm;
  TrainConfig lstm;
  CdConfig crbm;
  int meanfield_iters = 10;
};

struct TrainedPredictor {
  PredictorModel model;
  std::vector<double> epoch_losses;  // LSTM loss or CRBM reconstruction MSE
};

/// Prunes always-zero channels, fits z-scoring on the clean trace and trains
/// the configured predictor in the normalized space.
inline TrainedPredictor train_predictor(const Trace& clean_raw, const PredictorConfig& config,
                                        const EpochCallback& on_epoch = {}) {
  auto pruned = prune_zero_channels(clean_raw);
  TrainedPredictor out;
  out.model.channels = clean_raw.channels();
  out.model.sample_rate_hz = clean_raw.sample_rate_hz();
  out.model.norm = fit_normalization(pruned.trace, pruned.pruned_mask);
  out.model.meanfield_iters = config.meanfield_iters;
  const Trace z = normalize(pruned.trace, out.model.norm);
  if (config.kind == ModelKind::Lstm) {
    const auto seqs = chunk_sequences(z.frames(), config.lstm.sequence_length, config.lstm.sequence_length);
    if (seqs.empty()) throw Error("training trace shorter than one sequence");
    auto r = train_lstm<double>(seqs, config.lstm, on_epoch);
    out.model.params = std::move(r.params);
    out.epoch_losses = std::move(r.epoch_losses);
  } else {
    if (config.meanfield_iters < 1) throw ConfigError("meanfield_iters must be >= 1");
    const std::vector<RowMatrix> seqs{z.frames()};
    auto r = cd_train(seqs, config.crbm, on_epoch);
    out.model.params = std::move(r.params);
    out.epoch_losses = std::move(r.epoch_mse);
  }
  return out;
}

}  // namespace hpc_sentinel

#endif  // HPC_SENTINEL_PIPELINE_HPP_
