// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

// Two-sample Kolmogorov-Smirnov test on reconstruction errors. A window is
// flagged when its error ECDF departs from the reference ECDF by more than
// c(alpha) * sqrt((n + m) / (n * m)).

#ifndef HPC_SENTINEL_DETECT_HPP_
#define HPC_SENTINEL_DETECT_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hpc_sentinel/reconstruct.hpp"

namespace hpc_sentinel {

/// sup_x |F_a(x) - F_b(x)| by a sweep over the merged sorted samples. Equal
/// values advance both ECDFs together before the gap is measured.
inline double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error("ks_statistic needs two non-empty samples");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double n = static_cast<double>(sa.size());
  const double m = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

/// Asymptotic two-sample critical coefficient sqrt(-ln(alpha / 2) / 2).
inline double c_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  return std::sqrt(-std::log(alpha / 2.0) / 2.0);
}

inline double ks_threshold(std::size_t n, std::size_t m, double alpha) {
  if (n < 1 || m < 1) throw Error("KS sample sizes must be >= 1");
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return c_alpha(alpha) * std::sqrt((nn + mm) / (nn * mm));
}

struct KsVerdict {
  double statistic = 0.0;
  std::size_t n = 0;  // reference samples
  std::size_t m = 0;  // test samples
  double alpha = 0.05;
  double threshold = 0.0;
  bool reject = false;
};

inline KsVerdict ks_reject(double statistic, std::size_t n, std::size_t m, double alpha) {
  KsVerdict v;
  v.statistic = statistic;
  v.n = n;
  v.m = m;
  v.alpha = alpha;
  v.threshold = ks_threshold(n, m, alpha);
  v.reject = statistic > v.threshold;
  return v;
}

struct DetectorConfig {
  double alpha = 0.05;
  std::size_t window_frames = 2000;
  std::size_t subsample_every = 20;
  RolloutConfig rollout;

  static constexpr std::size_t kMinTestSamples = 10;

  /// Test samples one window yields after subsampling.
  std::size_t samples_per_window() const {
    const auto count = error_stream_count(window_frames, rollout);
    return subsample_every == 0 ? 0 : (count + subsample_every - 1) / subsample_every;
  }

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (subsample_every < 1) throw ConfigError("subsample_every must be >= 1");
    rollout.validate();
    if (samples_per_window() < kMinTestSamples) {
      throw ConfigError("a " + std::to_string(window_frames) + "-frame window yields only " +
                        std::to_string(samples_per_window()) + " test samples; need >= " +
                        std::to_string(kMinTestSamples));
    }
  }
};

/// Every `every`-th value starting with the first.
inline std::vector<double> subsample(std::span<const double> values, std::size_t every) {
  std::vector<double> out;
  for (std::size_t i = 0; i < values.size(); i += every) out.push_back(values[i]);
  return out;
}

/// KS verdict for one window's (unsubsampled) error stream.
inline KsVerdict ks_verdict_for_errors(const ReferenceProfile& profile, std::span<const double> window_errors,
                                       double alpha, std::size_t subsample_every) {
  const auto test = subsample(window_errors, subsample_every);
  if (test.empty()) throw Error("window produced no reconstruction errors");
  const double d = ks_statistic(profile.samples, test);
  return ks_reject(d, profile.samples.size(), test.size(), alpha);
}

inline void check_fingerprint(const ReferenceProfile& profile, const std::string& fingerprint) {
  if (profile.model_fingerprint != fingerprint) {
    throw FingerprintMismatch("profile was built for model " + profile.model_fingerprint + ", not " + fingerprint);
  }
}

/// Tests one raw window against the reference profile.
inline KsVerdict detect_window(const ReferenceProfile& profile, const PredictorModel& model, const Trace& window,
                               const DetectorConfig& config) {
  config.validate();
  check_fingerprint(profile, model_fingerprint(model));
  if (window.num_frames() < config.rollout.warmup + config.rollout.lookahead) {
    throw Error("window shorter than warmup + lookahead");
  }
  const auto errors = error_stream(model, window, config.rollout);
  return ks_verdict_for_errors(profile, errors, config.alpha, config.subsample_every);
}

struct WindowErrors {
  TraceWindow window;
  std::vector<double> errors;
};

/// Error streams for consecutive non-overlapping windows of a raw trace.
/// Windows are evaluated in parallel; output order follows the trace.
inline std::vector<WindowErrors> window_error_streams(const PredictorModel& model, const Trace& raw,
                                                      const DetectorConfig& config, unsigned threads = 1) {
  config.validate();
  const Trace prepared = model.prepare(raw);
  const auto windows = window_iter(prepared, config.window_frames, config.window_frames);
  std::vector<WindowErrors> out(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t w) {
    out[w].window = windows[w];
    out[w].errors = error_stream_frames(model, prepared.view(windows[w]), config.rollout);
  });
  return out;
}

struct WindowVerdict {
  std::size_t window_start = 0;
  KsVerdict verdict;
};

inline std::vector<WindowVerdict> detect_trace(const ReferenceProfile& profile, const PredictorModel& model,
                                               const Trace& raw, const DetectorConfig& config, unsigned threads = 1) {
  check_fingerprint(profile, model_fingerprint(model));
  std::vector<WindowVerdict> out;
  for (const auto& we : window_error_streams(model, raw, config, threads)) {
    out.push_back({we.window.start, ks_verdict_for_errors(profile, we.errors, config.alpha, config.subsample_every)});
  }
  return out;
}

/// Per-value verdicts e > mean + 3 * stddev.
inline std::vector<bool> hard_threshold_detect(std::span<const double> errors, double calib_mean, double calib_std) {
  if (!(calib_std >= 0.0)) throw ConfigError("calibration stddev must be >= 0");
  const double limit = calib_mean + 3.0 * calib_std;
  std::vector<bool> out(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) out[i] = errors[i] > limit;
  return out;
}

/// Population mean and stddev of the reference samples.
inline std::pair<double, double> profile_moments(const ReferenceProfile& profile) {
  const double n = static_cast<double>(profile.samples.size());
  double mean = 0.0;
  for (double e : profile.samples) mean += e;
  mean /= n;
  double var = 0.0;
  for (double e : profile.samples) var += (e - mean) * (e - mean);
  return {mean, std::sqrt(var / n)};
}

// Verdict files: one row per window. KS files carry D, n, m so the rejection
// rule can be re-applied at any alpha without recomputing errors.

inline constexpr std::string_view kVerdictMagic = "# hpc-sentinel-verdicts v1";
inline constexpr std::string_view kKsVerdictHeader = "window_start_frame,D,n,m,alpha,threshold,reject";
inline constexpr std::string_view kHardVerdictHeader = "window_start_frame,max_error,mean,stddev,threshold,reject";

inline std::string serialize_ks_verdicts(const std::vector<WindowVerdict>& verdicts, std::size_t window_frames,
                                         const std::string& fingerprint) {
  std::string out;
  out += kVerdictMagic;
  out += " detector=ks window_frames=" + std::to_string(window_frames) + " model=" + fingerprint + '\n';
  out += kKsVerdictHeader;
  out += '\n';
  for (const auto& v : verdicts) {
    out += std::to_string(v.window_start) + ',' + format_double(v.verdict.statistic) + ',' +
           std::to_string(v.verdict.n) + ',' + std::to_string(v.verdict.m) + ',' + format_double(v.verdict.alpha) +
           ',' + format_double(v.verdict.threshold) + ',' + (v.verdict.reject ? "1" : "0") + '\n';
  }
  return out;
}

struct HardWindowVerdict {
  std::size_t window_start = 0;
  double max_error = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  bool reject = false;
};

/// Window flagged when any of its errors exceeds mean + 3 * stddev.
inline HardWindowVerdict hard_window_verdict(std::size_t start, std::span<const double> errors, double mean,
                                             double stddev) {
  const auto flags = hard_threshold_detect(errors, mean, stddev);
  HardWindowVerdict v{start, 0.0, mean, stddev, false};
  for (std::size_t i = 0; i < errors.size(); ++i) {
    v.max_error = std::max(v.max_error, errors[i]);
    v.reject = v.reject || flags[i];
  }
  return v;
}

inline std::string serialize_hard_verdicts(const std::vector<HardWindowVerdict>& verdicts, std::size_t window_frames,
                                           const std::string& fingerprint) {
  std::string out;
  out += kVerdictMagic;
  out += " detector=hard window_frames=" + std::to_string(window_frames) + " model=" + fingerprint + '\n';
  out += kHardVerdictHeader;
  out += '\n';
  for (const auto& v : verdicts) {
    out += std::to_string(v.window_start) + ',' + format_double(v.max_error) + ',' + format_double(v.mean) + ',' +
           format_double(v.stddev) + ',' + format_double(v.mean + 3.0 * v.stddev) + ',' + (v.reject ? "1" : "0") +
           '\n';
  }
  return out;
}

/// A parsed verdict file of either detector.
struct VerdictTable {
  std::string detector;  // "ks" or "hard"
  std::size_t window_frames = 0;
  std::vector<std::size_t> window_starts;
  std::vector<bool> reject;
  // KS only
  std::vector<double> statistic;
  std::vector<std::size_t> n, m;
  std::vector<double> alpha;

  /// Verdicts re-derived at another alpha (KS files only).
  std::vector<bool> reject_at(double alpha) const {
    if (detector != "ks") return reject;
    std::vector<bool> out(statistic.size());
    for (std::size_t i = 0; i < statistic.size(); ++i) out[i] = ks_reject(statistic[i], n[i], m[i], alpha).reject;
    return out;
  }
};

inline VerdictTable parse_verdicts(std::string_view text) {
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || line.substr(0, kVerdictMagic.size()) != kVerdictMagic) {
    throw IngestionError(1, "missing '# hpc-sentinel-verdicts v1' header");
  }
  VerdictTable t;
  for (auto tok : split(trim(line.substr(kVerdictMagic.size())), ' ')) {
    auto eq = tok.find('=');
    if (eq == std::string_view::npos) continue;
    auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "detector") t.detector = std::string(val);
    if (key == "window_frames") std::from_chars(val.data(), val.data() + val.size(), t.window_frames);
  }
  if (t.detector != "ks" && t.detector != "hard") throw IngestionError(1, "unknown detector");
  if (t.window_frames == 0) throw IngestionError(1, "missing window_frames");
  if (!reader.next(line)) throw IngestionError(2, "missing column header");
  const auto expected = t.detector == "ks" ? kKsVerdictHeader : kHardVerdictHeader;
  if (trim(line) != expected) throw IngestionError(reader.line_no(), "unexpected column header");
  auto as_size = [&](std::string_view v) {
    std::size_t out = 0;
    v = trim(v);
    if (std::from_chars(v.data(), v.data() + v.size(), out).ec != std::errc{}) {
      throw IngestionError(reader.line_no(), "expected an integer");
    }
    return out;
  };
  while (reader.next(line)) {
    if (trim(line).empty()) continue;
    auto f = split(line, ',');
    const std::size_t cols = t.detector == "ks" ? 7 : 6;
    if (f.size() != cols) throw IngestionError(reader.line_no(), "wrong column count");
    t.window_starts.push_back(as_size(f[0]));
    const auto flag = trim(f[cols - 1]);
    if (flag != "0" && flag != "1") throw IngestionError(reader.line_no(), "reject must be 0 or 1");
    t.reject.push_back(flag == "1");
    if (t.detector == "ks") {
      double d = 0.0;
      if (!parse_double(f[1], d)) throw IngestionError(reader.line_no(), "malformed D");
      t.statistic.push_back(d);
      double a = 0.0;
      if (!parse_double(f[4], a)) throw IngestionError(reader.line_no(), "malformed alpha");
      t.alpha.push_back(a);
      t.n.push_back(as_size(f[2]));
      t.m.push_back(as_size(f[3]));
    }
  }
  return t;
}

}  // namespace hpc_sentinel

#endif  // HPC_SENTINEL_DETECT_HPP_
