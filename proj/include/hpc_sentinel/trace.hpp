// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

// HPC time series: channel metadata, CSV ingestion, zero-channel pruning and
// per-channel z-scoring.

#ifndef HPC_SENTINEL_TRACE_HPP_
#define HPC_SENTINEL_TRACE_HPP_

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hpc_sentinel/common.hpp"
#include "hpc_sentinel/io.hpp"

namespace hpc_sentinel {

enum class CounterKind { Cycles = 0, Instructions = 1, Branches = 2, L1Misses = 3 };

inline constexpr std::array<CounterKind, 4> kAllCounters = {
    CounterKind::Cycles, CounterKind::Instructions, CounterKind::Branches, CounterKind::L1Misses};

inline constexpr std::string_view counter_name(CounterKind kind) {
  switch (kind) {
    case CounterKind::Cycles: return "cycles";
    case CounterKind::Instructions: return "instructions";
    case CounterKind::Branches: return "branches";
    case CounterKind::L1Misses: return "l1_misses";
  }
  return "unknown";
}

inline std::optional<CounterKind> parse_counter(std::string_view name) {
  for (auto kind : kAllCounters) {
    if (counter_name(kind) == name) return kind;
  }
  return std::nullopt;
}

struct ChannelSpec {
  std::string thread_name;
  CounterKind counter_kind = CounterKind::Cycles;
  std::size_t channel_index = 0;

  /// `thread:counter`, the column name used in trace files.
  std::string name() const { return thread_name + ":" + std::string(counter_name(counter_kind)); }

  friend bool operator==(const ChannelSpec&, const ChannelSpec&) = default;
};

inline ChannelSpec parse_channel_name(std::string_view name, std::size_t index) {
  auto colon = name.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw IngestionError("channel name '" + std::string(name) + "' is not thread:counter");
  }
  auto kind = parse_counter(name.substr(colon + 1));
  if (!kind) throw IngestionError("unknown counter in channel '" + std::string(name) + "'");
  return ChannelSpec{std::string(name.substr(0, colon)), *kind, index};
}

/// Half-open frame range [start, start + length).
struct TraceWindow {
  std::size_t start = 0;
  std::size_t length = 0;
  friend bool operator==(const TraceWindow&, const TraceWindow&) = default;
};

/// Uniformly sampled multivariate counter series, one frame per row.
class Trace {
 public:
  Trace() = default;

  Trace(std::vector<ChannelSpec> channels, RowMatrix frames, double sample_rate_hz = 1000.0)
      : channels_(std::move(channels)), frames_(std::move(frames)), sample_rate_hz_(sample_rate_hz) {
    if (static_cast<std::size_t>(frames_.cols()) != channels_.size()) {
      throw DimensionError("trace has " + std::to_string(channels_.size()) + " channels but frames of width " +
                           std::to_string(frames_.cols()));
    }
    for (std::size_t i = 0; i < channels_.size(); ++i) {
      if (channels_[i].channel_index != i) throw DimensionError("channel indices must be contiguous from 0");
    }
    if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) throw ConfigError("sample rate must be positive");
  }

  const std::vector<ChannelSpec>& channels() const noexcept { return channels_; }
  const RowMatrix& frames() const noexcept { return frames_; }
  std::size_t num_frames() const noexcept { return static_cast<std::size_t>(frames_.rows()); }
  std::size_t num_channels() const noexcept { return channels_.size(); }
  double sample_rate_hz() const noexcept { return sample_rate_hz_; }

  auto frame(std::size_t t) const { return frames_.row(static_cast<Eigen::Index>(t)); }

  FramesRef view(TraceWindow w) const {
    return frames_.middleRows(static_cast<Eigen::Index>(w.start), static_cast<Eigen::Index>(w.length));
  }

  Trace slice(TraceWindow w) const { return Trace(channels_, RowMatrix(view(w)), sample_rate_hz_); }

  friend bool operator==(const Trace& a, const Trace& b) {
    return a.channels_ == b.channels_ && a.sample_rate_hz_ == b.sample_rate_hz_ &&
           a.frames_.rows() == b.frames_.rows() && a.frames_.cols() == b.frames_.cols() &&
           a.frames_ == b.frames_;
  }

 private:
  std::vector<ChannelSpec> channels_;
  RowMatrix frames_;
  double sample_rate_hz_ = 1000.0;
};

inline constexpr std::string_view kTraceMagic = "# hpc-trace v1";

/// Serializes to the trace CSV format. `extra_header` lines are emitted as
/// `# key=value` comments after the rate line.
inline std::string save_trace(const Trace& trace, const std::vector<std::string>& extra_header = {}) {
  std::string out;
  out.reserve(64 + trace.num_frames() * trace.num_channels() * 8);
  out += kTraceMagic;
  out += '\n';
  for (std::size_t c = 0; c < trace.num_channels(); ++c) {
    if (c) out += ',';
    out += trace.channels()[c].name();
  }
  out += '\n';
  out += "# rate_hz=" + format_double(trace.sample_rate_hz()) + '\n';
  for (const auto& line : extra_header) out += "# " + line + '\n';
  for (std::size_t t = 0; t < trace.num_frames(); ++t) {
    for (std::size_t c = 0; c < trace.num_channels(); ++c) {
      if (c) out += ',';
      out += format_double(trace.frames()(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)));
    }
    out += '\n';
  }
  return out;
}

inline void save_trace(const Trace& trace, const std::filesystem::path& path,
                       const std::vector<std::string>& extra_header = {}) {
  write_file_atomic(path, save_trace(trace, extra_header));
}

/// Parses trace CSV text. When `schema` is non-empty the header must name
/// exactly those channels in order.
inline Trace parse_trace(std::string_view text, const std::vector<ChannelSpec>& schema = {}) {
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || trim(line) != kTraceMagic) {
    throw IngestionError(1, "missing '# hpc-trace v1' header");
  }
  if (!reader.next(line)) throw IngestionError(2, "missing channel header");
  std::vector<ChannelSpec> channels;
  for (auto name : split(trim(line), ',')) {
    try {
      channels.push_back(parse_channel_name(trim(name), channels.size()));
    } catch (const IngestionError& e) {
      throw IngestionError(reader.line_no(), e.what());
    }
  }
  if (!schema.empty()) {
    if (schema.size() != channels.size()) {
      throw IngestionError(reader.line_no(), "header has " + std::to_string(channels.size()) +
                                                 " channels, schema expects " + std::to_string(schema.size()));
    }
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (schema[i].name() != channels[i].name()) {
        throw IngestionError(reader.line_no(), "channel " + std::to_string(i) + " is '" + channels[i].name() +
                                                   "', schema expects '" + schema[i].name() + "'");
      }
    }
  }
  double rate = 1000.0;
  if (!reader.next(line)) throw IngestionError(3, "missing rate header");
  {
    auto body = trim(line);
    constexpr std::string_view prefix = "# rate_hz=";
    if (body.substr(0, prefix.size()) != prefix || !parse_double(body.substr(prefix.size()), rate) ||
        !(rate > 0.0)) {
      throw IngestionError(reader.line_no(), "malformed rate header");
    }
  }

  const std::size_t width = channels.size();
  std::vector<double> values;
  std::size_t rows = 0;
  bool in_header = true;
  while (reader.next(line)) {
    if (in_header && !line.empty() && line.front() == '#') continue;
    in_header = false;
    ++rows;
    if (trim(line).empty()) {
      throw IngestionError(reader.line_no(), "row " + std::to_string(rows) + ": empty row (gap in frames)");
    }
    auto fields = split(line, ',');
    if (fields.size() != width) {
      throw IngestionError(reader.line_no(), "row " + std::to_string(rows) + ": expected " + std::to_string(width) +
                                                 " values, got " + std::to_string(fields.size()));
    }
    for (auto field : fields) {
      double v = 0.0;
      if (!parse_double(field, v)) {
        throw IngestionError(reader.line_no(),
                             "row " + std::to_string(rows) + ": malformed value '" + std::string(field) + "'");
      }
      if (!std::isfinite(v)) {
        throw IngestionError(reader.line_no(), "row " + std::to_string(rows) + ": non-finite value");
      }
      values.push_back(v);
    }
  }
  if (rows == 0) throw IngestionError(reader.line_no(), "no frames");
  RowMatrix frames = Eigen::Map<RowMatrix>(values.data(), static_cast<Eigen::Index>(rows),
                                           static_cast<Eigen::Index>(width));
  return Trace(std::move(channels), std::move(frames), rate);
}

inline Trace load_trace(const std::filesystem::path& path, const std::vector<ChannelSpec>& schema = {}) {
  return parse_trace(read_file(path), schema);
}

struct PruneResult {
  Trace trace;
  std::vector<bool> pruned_mask;
};

/// Keeps the channels flagged false in `mask`, preserving order.
inline Trace select_channels(const Trace& trace, const std::vector<bool>& mask) {
  if (mask.size() != trace.num_channels()) {
    throw DimensionError("mask covers " + std::to_string(mask.size()) + " channels, trace has " +
                         std::to_string(trace.num_channels()));
  }
  std::vector<ChannelSpec> kept;
  std::vector<Eigen::Index> cols;
  for (std::size_t c = 0; c < mask.size(); ++c) {
    if (mask[c]) continue;
    ChannelSpec spec = trace.channels()[c];
    spec.channel_index = kept.size();
    kept.push_back(std::move(spec));
    cols.push_back(static_cast<Eigen::Index>(c));
  }
  RowMatrix frames(trace.frames().rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) frames.col(static_cast<Eigen::Index>(j)) = trace.frames().col(cols[j]);
  return Trace(std::move(kept), std::move(frames), trace.sample_rate_hz());
}

/// Removes channels that are exactly zero in every frame.
inline PruneResult prune_zero_channels(const Trace& trace) {
  if (trace.num_frames() == 0 || trace.num_channels() == 0) throw Error("cannot prune an empty trace");
  std::vector<bool> mask(trace.num_channels());
  bool any_kept = false;
  for (std::size_t c = 0; c < trace.num_channels(); ++c) {
    mask[c] = (trace.frames().col(static_cast<Eigen::Index>(c)).array() == 0.0).all();
    any_kept = any_kept || !mask[c];
  }
  if (!any_kept) throw Error("trace carries no signal");
  return PruneResult{select_channels(trace, mask), std::move(mask)};
}

inline constexpr double kStddevFloor = 1e-6;

struct NormalizationStats {
  Vector mean;
  Vector stddev;
  // One entry per original channel; true = removed before fitting.
  std::vector<bool> pruned_mask;

  std::size_t retained() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Population mean and stddev per channel, stddev floored at kStddevFloor.
inline NormalizationStats fit_normalization(const Trace& trace, std::vector<bool> pruned_mask = {}) {
  if (trace.num_frames() < 2) throw Error("normalization needs at least 2 frames");
  if (pruned_mask.empty()) pruned_mask.assign(trace.num_channels(), false);
  std::size_t retained = 0;
  for (bool p : pruned_mask) retained += p ? 0 : 1;
  if (retained != trace.num_channels()) {
    throw DimensionError("pruned mask retains " + std::to_string(retained) + " channels, trace has " +
                         std::to_string(trace.num_channels()));
  }
  const auto& x = trace.frames();
  const double n = static_cast<double>(trace.num_frames());
  NormalizationStats stats;
  stats.mean = x.colwise().sum().transpose() / n;
  stats.stddev.resize(stats.mean.size());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - stats.mean[c]).square().sum() / n;
    double sd = std::sqrt(var);
    if (!(sd >= kStddevFloor)) {
      warn("channel '" + trace.channels()[static_cast<std::size_t>(c)].name() +
           "' is near-constant; stddev floored");
      sd = kStddevFloor;
    }
    stats.stddev[c] = sd;
  }
  stats.pruned_mask = std::move(pruned_mask);
  return stats;
}

inline Trace normalize(const Trace& trace, const NormalizationStats& stats) {
  if (stats.retained() != trace.num_channels()) {
    throw DimensionError("stats cover " + std::to_string(stats.retained()) + " channels, trace has " +
                         std::to_string(trace.num_channels()));
  }
  RowMatrix z = (trace.frames().rowwise() - stats.mean.transpose()).array().rowwise() /
                stats.stddev.transpose().array();
  return Trace(trace.channels(), std::move(z), trace.sample_rate_hz());
}

inline Trace denormalize(const Trace& trace, const NormalizationStats& stats) {
  if (stats.retained() != trace.num_channels()) throw DimensionError("stats/trace channel mismatch");
  RowMatrix x = (trace.frames().array().rowwise() * stats.stddev.transpose().array()).rowwise() +
                stats.mean.transpose().array();
  return Trace(trace.channels(), std::move(x), trace.sample_rate_hz());
}

/// Applies the pruning mask then z-scores: the full preprocessing path for
/// raw traces at train, profile and detect time.
inline Trace preprocess(const Trace& raw, const NormalizationStats& stats) {
  return normalize(select_channels(raw, stats.pruned_mask), stats);
}

/// Windows of `length` frames starting at 0, stride, 2*stride, ...
inline std::vector<TraceWindow> window_iter(std::size_t num_frames, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0) throw ConfigError("window length and stride must be >= 1");
  std::vector<TraceWindow> out;
  if (length > num_frames) return out;
  const std::size_t count = (num_frames - length) / stride + 1;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({i * stride, length});
  return out;
}

inline std::vector<TraceWindow> window_iter(const Trace& trace, std::size_t length, std::size_t stride) {
  return window_iter(trace.num_frames(), length, stride);
}

}  // namespace hpc_sentinel

#endif  // HPC_SENTINEL_TRACE_HPP_
