// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

#ifndef HPC_SENTINEL_MODEL_HPP_
#define HPC_SENTINEL_MODEL_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <variant>

#include "hpc_sentinel/crbm.hpp"
#include "hpc_sentinel/io.hpp"
#include "hpc_sentinel/lstm.hpp"
#include "hpc_sentinel/trace.hpp"

namespace hpc_sentinel {

enum class ModelKind { Lstm, Crbm };

inline std::string_view model_kind_name(ModelKind kind) { return kind == ModelKind::Lstm ? "lstm" : "crbm"; }

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "lstm") return ModelKind::Lstm;
  if (name == "crbm") return ModelKind::Crbm;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected lstm or crbm)");
}

/// A trained next-frame predictor together with the preprocessing that maps
/// raw counter frames into its input space.
struct PredictorModel {
  std::vector<ChannelSpec> channels;  // raw schema, before pruning
  double sample_rate_hz = 1000.0;
  NormalizationStats norm;
  std::variant<LstmParams<double>, CrbmParams> params;
  int meanfield_iters = 10;  // CRBM only

  ModelKind kind() const { return params.index() == 0 ? ModelKind::Lstm : ModelKind::Crbm; }
  const LstmParams<double>& lstm() const { return std::get<0>(params); }
  const CrbmParams& crbm() const { return std::get<1>(params); }

  std::size_t width() const {
    return kind() == ModelKind::Lstm ? lstm().input_size : crbm().n_visible;
  }

  /// Frames of context a prediction needs: 1 for the LSTM, k for the CRBM.
  std::size_t min_history() const { return kind() == ModelKind::Lstm ? 1 : crbm().order; }

  /// Raw trace -> pruned, z-scored trace in model space.
  Trace prepare(const Trace& raw) const {
    if (raw.num_channels() != channels.size()) {
      throw DimensionError("trace has " + std::to_string(raw.num_channels()) + " channels, model expects " +
                           std::to_string(channels.size()));
    }
    for (std::size_t c = 0; c < channels.size(); ++c) {
      if (raw.channels()[c].name() != channels[c].name()) {
        throw DimensionError("trace channel '" + raw.channels()[c].name() + "' does not match model channel '" +
                             channels[c].name() + "'");
      }
    }
    return preprocess(raw, norm);
  }
};

inline constexpr std::string_view kModelMagic = "# hpc-sentinel-model v1";

namespace detail {

inline void append_row(std::string& out, const double* data, Eigen::Index n, Eigen::Index stride = 1) {
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k) out += ',';
    out += format_double(data[k * stride]);
  }
  out += '\n';
}

// Tensors are written row by row; storage is column-major.
inline void append_tensor(std::string& out, const std::string& name, const double* data, Eigen::Index rows,
                          Eigen::Index cols) {
  out += "tensor " + name + ' ' + std::to_string(rows) + ' ' + std::to_string(cols) + '\n';
  for (Eigen::Index r = 0; r < rows; ++r) append_row(out, data + r, cols, rows);
}

inline std::vector<double> parse_list(std::string_view text, std::size_t line) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (auto field : split(text, ',')) {
    double v = 0.0;
    if (!parse_double(field, v) || !std::isfinite(v)) throw IngestionError(line, "malformed number '" + std::string(field) + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

inline std::string serialize_model(const PredictorModel& m) {
  std::string out;
  out += kModelMagic;
  out += '\n';
  out += "kind=" + std::string(model_kind_name(m.kind())) + '\n';
  out += "rate_hz=" + format_double(m.sample_rate_hz) + '\n';
  out += "channels=";
  for (std::size_t c = 0; c < m.channels.size(); ++c) out += (c ? "," : "") + m.channels[c].name();
  out += '\n';
  out += "pruned=";
  for (bool b : m.norm.pruned_mask) out += b ? '1' : '0';
  out += '\n';
  out += "norm_mean=";
  detail::append_row(out, m.norm.mean.data(), m.norm.mean.size());
  out += "norm_std=";
  detail::append_row(out, m.norm.stddev.data(), m.norm.stddev.size());
  if (m.kind() == ModelKind::Lstm) {
    const auto& p = m.lstm();
    out += "input_size=" + std::to_string(p.input_size) + '\n';
    out += "hidden_size=" + std::to_string(p.hidden_size) + '\n';
    p.for_each_tensor([&](const std::string& name, const double* d, Eigen::Index r, Eigen::Index c) {
      detail::append_tensor(out, name, d, r, c);
    });
  } else {
    const auto& p = m.crbm();
    out += "n_visible=" + std::to_string(p.n_visible) + '\n';
    out += "n_hidden=" + std::to_string(p.n_hidden) + '\n';
    out += "order=" + std::to_string(p.order) + '\n';
    out += "meanfield_iters=" + std::to_string(m.meanfield_iters) + '\n';
    p.for_each_tensor([&](const std::string& name, const double* d, Eigen::Index r, Eigen::Index c) {
      detail::append_tensor(out, name, d, r, c);
    });
  }
  return out;
}

/// Content digest identifying a model; profiles and verdicts carry it.
inline std::string model_fingerprint(const PredictorModel& m) { return sha256_hex(serialize_model(m)); }

inline PredictorModel parse_model(std::string_view text) {
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || trim(line) != kModelMagic) throw IngestionError(1, "missing '# hpc-sentinel-model v1' header");

  std::map<std::string, std::string, std::less<>> fields;
  std::map<std::string, Matrix, std::less<>> tensors;
  while (reader.next(line)) {
    if (trim(line).empty()) continue;
    if (line.substr(0, 7) == "tensor ") {
      auto parts = split(trim(line), ' ');
      std::size_t rows = 0, cols = 0;
      if (parts.size() != 4 || std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(), rows).ec != std::errc{} ||
          std::from_chars(parts[3].data(), parts[3].data() + parts[3].size(), cols).ec != std::errc{}) {
        throw IngestionError(reader.line_no(), "malformed tensor header");
      }
      Matrix t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows; ++r) {
        if (!reader.next(line)) throw IngestionError(reader.line_no(), "truncated tensor " + std::string(parts[1]));
        auto vals = detail::parse_list(line, reader.line_no());
        if (vals.size() != cols) throw IngestionError(reader.line_no(), "tensor row has wrong length");
        for (std::size_t c = 0; c < cols; ++c) t(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vals[c];
      }
      tensors.emplace(std::string(parts[1]), std::move(t));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw IngestionError(reader.line_no(), "expected key=value");
    fields.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }

  auto field = [&](std::string_view key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw IngestionError("model file lacks '" + std::string(key) + "'");
    return it->second;
  };
  auto size_field = [&](std::string_view key) -> std::size_t {
    const auto& v = field(key);
    std::size_t out = 0;
    if (std::from_chars(v.data(), v.data() + v.size(), out).ec != std::errc{}) {
      throw IngestionError("model field '" + std::string(key) + "' is not an integer");
    }
    return out;
  };
  auto tensor = [&](std::string_view name, Eigen::Index rows, Eigen::Index cols) -> Matrix {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IngestionError("model file lacks tensor '" + std::string(name) + "'");
    if (it->second.rows() != rows || it->second.cols() != cols) {
      throw IngestionError("tensor '" + std::string(name) + "' has wrong shape");
    }
    return it->second;
  };

  PredictorModel m;
  const auto kind = parse_model_kind(field("kind"));
  if (!parse_double(field("rate_hz"), m.sample_rate_hz)) throw IngestionError("malformed rate_hz");
  {
    auto names = split(field("channels"), ',');
    for (auto n : names) m.channels.push_back(parse_channel_name(n, m.channels.size()));
  }
  for (char ch : field("pruned")) {
    if (ch != '0' && ch != '1') throw IngestionError("malformed pruned mask");
    m.norm.pruned_mask.push_back(ch == '1');
  }
  if (m.norm.pruned_mask.size() != m.channels.size()) throw IngestionError("pruned mask does not cover the channels");
  {
    auto mean = detail::parse_list(field("norm_mean"), 0);
    auto sd = detail::parse_list(field("norm_std"), 0);
    if (mean.size() != sd.size()) throw IngestionError("normalization vectors differ in length");
    m.norm.mean = Eigen::Map<Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    m.norm.stddev = Eigen::Map<Vector>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  }

  if (kind == ModelKind::Lstm) {
    const auto I = size_field("input_size");
    const auto H = size_field("hidden_size");
    auto p = LstmParams<double>::zeros(I, H);
    p.for_each_tensor([&](const std::string& name, double* d, Eigen::Index r, Eigen::Index c) {
      Eigen::Map<Matrix>(d, r, c) = tensor(name, r, c);
    });
    m.params = std::move(p);
  } else {
    auto p = CrbmParams::zeros(size_field("n_visible"), size_field("n_hidden"), size_field("order"));
    p.for_each_tensor([&](const std::string& name, double* d, Eigen::Index r, Eigen::Index c) {
      Eigen::Map<Matrix>(d, r, c) = tensor(name, r, c);
    });
    m.meanfield_iters = static_cast<int>(size_field("meanfield_iters"));
    m.params = std::move(p);
  }
  if (m.norm.retained() != m.width()) throw IngestionError("normalization width does not match model width");
  return m;
}

inline void save_model(const PredictorModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(m));
}

inline PredictorModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

}  // namespace hpc_sentinel

#endif  // HPC_SENTINEL_MODEL_HPP_
