// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

#ifndef HPC_SENTINEL_BENCH_HPP_
#define HPC_SENTINEL_BENCH_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hpc_sentinel/detect.hpp"

namespace hpc_sentinel {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  std::size_t errors() const { return fp + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Positive = attack.
inline ConfusionCounts confusion(const std::vector<bool>& verdicts, const std::vector<bool>& labels) {
  if (verdicts.size() != labels.size()) {
    throw DimensionError("confusion: " + std::to_string(verdicts.size()) + " verdicts vs " +
                         std::to_string(labels.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (labels[i]) {
      (verdicts[i] ? c.tp : c.fn)++;
    } else {
      (verdicts[i] ? c.fp : c.tn)++;
    }
  }
  return c;
}

struct MetricsReport {
  double accuracy = 0.0;
  double false_positive_rate = 0.0;
  double false_negative_rate = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when some ratio was 0/0 and reported as 1.0.
  bool degenerate = false;
};

/// 0/0 ratios are reported as 1.0 and flagged degenerate.
inline MetricsReport metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw Error("metrics need at least one evaluated window");
  MetricsReport r;
  auto ratio = [&](std::size_t num, std::size_t den, double if_empty) {
    if (den == 0) {
      r.degenerate = true;
      return if_empty;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.false_positive_rate = ratio(c.fp, c.fp + c.tn, 0.0);
  r.false_negative_rate = ratio(c.fn, c.fn + c.tp, 0.0);
  r.precision = ratio(c.tp, c.tp + c.fp, 1.0);
  r.recall = ratio(c.tp, c.tp + c.fn, 1.0);
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.f1 = 0.0;
  }
  return r;
}

/// Window label: any attack frame inside the window.
inline std::vector<bool> window_labels(const std::vector<bool>& frame_labels, const std::vector<TraceWindow>& windows) {
  std::vector<bool> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    if (w.start + w.length > frame_labels.size()) throw DimensionError("window extends past the label sequence");
    bool any = false;
    for (std::size_t t = w.start; t < w.start + w.length && !any; ++t) any = frame_labels[t];
    out.push_back(any);
  }
  return out;
}

struct SweepRow {
  double alpha = 0.0;
  std::vector<bool> verdicts;
  ConfusionCounts counts;
  MetricsReport report;
};

/// Re-applies the KS rule at each alpha to one set of window error streams.
inline std::vector<SweepRow> sweep_alpha(const ReferenceProfile& profile,
                                         const std::vector<std::vector<double>>& window_errors,
                                         const std::vector<bool>& labels, const std::vector<double>& alphas,
                                         std::size_t subsample_every) {
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0)) throw ConfigError("alphas must lie in (0, 1)");
    if (i && !(alphas[i] < alphas[i - 1])) throw ConfigError("alphas must be sorted descending");
  }
  std::vector<double> stats;
  std::vector<std::size_t> ms;
  for (const auto& errors : window_errors) {
    const auto test = subsample(errors, subsample_every);
    stats.push_back(ks_statistic(profile.samples, test));
    ms.push_back(test.size());
  }
  std::vector<SweepRow> rows;
  for (double alpha : alphas) {
    SweepRow row;
    row.alpha = alpha;
    for (std::size_t w = 0; w < stats.size(); ++w) {
      row.verdicts.push_back(ks_reject(stats[w], profile.samples.size(), ms[w], alpha).reject);
    }
    row.counts = confusion(row.verdicts, labels);
    row.report = metrics(row.counts);
    rows.push_back(std::move(row));
  }
  return rows;
}

enum class BaselineKind { Ema, Pca, Knn };

inline std::string_view baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Ema: return "ema";
    case BaselineKind::Pca: return "pca";
    case BaselineKind::Knn: return "knn";
  }
  return "unknown";
}

struct BaselineParams {
  double ema_smoothing = 0.2;
  std::size_t ema_window = 20;
  std::size_t pca_components = 10;
  std::size_t knn_neighbors = 5;
  // Training frames kept as kNN reference set (evenly spaced); 0 = all.
  std::size_t knn_max_reference = 2000;
  double calibration_quantile = 0.995;
};

namespace detail {

inline std::vector<double> ema_scores(FramesRef x, double smoothing, std::size_t window) {
  std::vector<double> raw(static_cast<std::size_t>(x.rows()));
  if (x.rows() == 0) return raw;
  Eigen::RowVectorXd ema = x.row(0);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    raw[static_cast<std::size_t>(t)] = (x.row(t) - ema).norm();
    ema = smoothing * x.row(t) + (1.0 - smoothing) * ema;
  }
  // Trailing mean over `window` scores.
  std::vector<double> out(raw.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < raw.size(); ++t) {
    acc += raw[t];
    if (t >= window) acc -= raw[t - window];
    out[t] = acc / static_cast<double>(std::min(t + 1, window));
  }
  return out;
}

struct PcaFit {
  Eigen::RowVectorXd mean;
  Matrix basis;  // channels x components, orthonormal columns
};

inline PcaFit pca_fit(FramesRef train, std::size_t components) {
  if (components > static_cast<std::size_t>(train.cols())) {
    throw ConfigError("PCA components (" + std::to_string(components) + ") exceed channel count (" +
                      std::to_string(train.cols()) + ")");
  }
  PcaFit fit;
  fit.mean = train.colwise().mean();
  const Matrix centered = train.rowwise() - fit.mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(1, train.rows()));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const auto k = static_cast<Eigen::Index>(components);
  // Eigenvalues ascend; keep the last k vectors.
  fit.basis = eig.eigenvectors().rightCols(k);
  return fit;
}

inline std::vector<double> pca_scores(const PcaFit& fit, FramesRef x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const Eigen::RowVectorXd c = x.row(t) - fit.mean;
    const Eigen::RowVectorXd proj = (c * fit.basis) * fit.basis.transpose();
    out[static_cast<std::size_t>(t)] = (c - proj).squaredNorm();
  }
  return out;
}

inline RowMatrix knn_reference(FramesRef train, std::size_t max_reference) {
  const auto n = static_cast<std::size_t>(train.rows());
  if (max_reference == 0 || n <= max_reference) return RowMatrix(train);
  RowMatrix ref(static_cast<Eigen::Index>(max_reference), train.cols());
  for (std::size_t i = 0; i < max_reference; ++i) ref.row(static_cast<Eigen::Index>(i)) = train.row(static_cast<Eigen::Index>(i * n / max_reference));
  return ref;
}

// Mean exact Euclidean distance to the k nearest reference rows. Candidates
// are ranked with the expanded ||x||^2 + ||r||^2 - 2 x.r form in blocks;
// `exclude_self` drops the query's own row (reference == queries).
inline std::vector<double> knn_scores(const RowMatrix& reference, FramesRef x, std::size_t k, bool exclude_self) {
  const auto R = reference.rows();
  const std::size_t usable = static_cast<std::size_t>(R) - (exclude_self ? 1 : 0);
  if (k < 1 || k > usable) throw ConfigError("knn neighbors must lie in [1, reference size]");
  const Vector ref_sq = reference.rowwise().squaredNorm();
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  constexpr Eigen::Index kBlock = 512;
  std::vector<std::pair<double, Eigen::Index>> cand(static_cast<std::size_t>(R));
  for (Eigen::Index b0 = 0; b0 < x.rows(); b0 += kBlock) {
    const Eigen::Index nb = std::min(kBlock, x.rows() - b0);
    const auto block = x.middleRows(b0, nb);
    const Matrix cross = block * reference.transpose();
    for (Eigen::Index q = 0; q < nb; ++q) {
      const double qsq = block.row(q).squaredNorm();
      for (Eigen::Index r = 0; r < R; ++r) cand[static_cast<std::size_t>(r)] = {qsq + ref_sq[r] - 2.0 * cross(q, r), r};
      if (exclude_self) cand[static_cast<std::size_t>(b0 + q)].first = std::numeric_limits<double>::infinity();
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += (block.row(q) - reference.row(cand[i].second)).norm();
      out[static_cast<std::size_t>(b0 + q)] = acc / static_cast<double>(k);
    }
  }
  return out;
}

}  // namespace detail

/// Per-frame anomaly scores of `test` under a model fit on `train`. Both must
/// already be normalized with shared stats.
inline std::vector<double> baseline_scores(BaselineKind kind, FramesRef train, FramesRef test,
                                           const BaselineParams& params = {}) {
  if (train.cols() != test.cols()) throw DimensionError("train and test differ in width");
  switch (kind) {
    case BaselineKind::Ema: return detail::ema_scores(test, params.ema_smoothing, params.ema_window);
    case BaselineKind::Pca: return detail::pca_scores(detail::pca_fit(train, params.pca_components), test);
    case BaselineKind::Knn:
      return detail::knn_scores(detail::knn_reference(train, params.knn_max_reference), test, params.knn_neighbors,
                                false);
  }
  throw ConfigError("unknown baseline");
}

/// Linear-interpolated quantile of unsorted values.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// A fitted baseline: scores plus the calibration threshold from its
/// training scores.
struct BaselineDetector {
  BaselineKind kind;
  BaselineParams params;
  RowMatrix train;
  double threshold = 0.0;

  BaselineDetector(BaselineKind k, FramesRef train_frames, const BaselineParams& p = {})
      : kind(k), params(p), train(train_frames) {
    std::vector<double> calib;
    if (kind == BaselineKind::Knn) {
      const auto ref = detail::knn_reference(train, params.knn_max_reference);
      calib = detail::knn_scores(ref, ref, params.knn_neighbors, true);
    } else {
      calib = baseline_scores(kind, train, train, params);
    }
    threshold = quantile(std::move(calib), params.calibration_quantile);
  }

  std::vector<double> scores(FramesRef test) const { return baseline_scores(kind, train, test, params); }

  /// Window flagged when any frame score exceeds the threshold.
  std::vector<bool> window_verdicts(FramesRef test, const std::vector<TraceWindow>& windows) const {
    const auto s = scores(test);
    std::vector<bool> out;
    for (const auto& w : windows) {
      bool any = false;
      for (std::size_t t = w.start; t < w.start + w.length && !any; ++t) any = s[t] > threshold;
      out.push_back(any);
    }
    return out;
  }
};

inline constexpr std::string_view kMetricsCsvHeader =
    "detector,alpha,Accuracy,False Positive,False Negative,Precision,Recall,F1,degenerate";

inline std::string metrics_csv_row(const std::string& detector, const std::string& alpha, const MetricsReport& r) {
  return detector + ',' + alpha + ',' + format_double(r.accuracy) + ',' + format_double(r.false_positive_rate) + ',' +
         format_double(r.false_negative_rate) + ',' + format_double(r.precision) + ',' + format_double(r.recall) +
         ',' + format_double(r.f1) + ',' + (r.degenerate ? "1" : "0");
}

inline std::string metrics_text_row(const std::string& detector, const std::string& alpha, const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-12s %-6s %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f%s", detector.c_str(),
                alpha.c_str(), r.accuracy, r.false_positive_rate, r.false_negative_rate, r.precision, r.recall, r.f1,
                r.degenerate ? "  (degenerate)" : "");
  return buf;
}

inline std::string metrics_text_header() {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-12s %-6s %9s %9s %9s %9s %9s %9s", "detector", "alpha", "Accuracy", "FalsePos",
                "FalseNeg", "Precision", "Recall", "F1");
  return buf;
}

}  // namespace hpc_sentinel

#endif  // HPC_SENTINEL_BENCH_HPP_
