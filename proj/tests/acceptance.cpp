// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

// Acceptance runner: one PASS/FAIL line per criterion AC1..AC10. Exit status
// is 0 only when every criterion passes. An optional argument names a file
// that receives a copy of the report.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hpc_sentinel/hpc_sentinel.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hpc_sentinel;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Benchmark preset for the LSTM; see README.
PredictorConfig lstm_preset() {
  PredictorConfig pc;
  pc.kind = ModelKind::Lstm;
  pc.lstm.hidden_size = 64;
  pc.lstm.learning_rate = 0.1;
  pc.lstm.epochs = 40;
  return pc;
}

PredictorConfig crbm_defaults() {
  PredictorConfig pc;
  pc.kind = ModelKind::Crbm;
  return pc;
}

constexpr std::uint64_t kTrainSeed = 101;
constexpr std::uint64_t kReferenceSeed = 202;
constexpr std::uint64_t kHeldOutSeed = 303;
constexpr std::uint64_t kSuiteSeed = 7;
constexpr std::size_t kTrainFrames = 40000;
constexpr std::size_t kReferenceFrames = 40000;
constexpr std::size_t kHeldOutFrames = 10000;

// Per-scenario window error streams and labels for one trained detector.
struct SuiteStreams {
  std::vector<std::vector<double>> errors;  // pooled over scenarios
  std::vector<bool> labels;
  std::vector<std::size_t> scenario;  // owning scenario index per window
};

struct Context {
  unsigned threads = default_threads();
  WorkloadSpec spec = WorkloadSpec::plc_default();
  Trace train_raw, reference_raw;
  std::vector<Scenario> suite;
  DetectorConfig detector;

  std::optional<PredictorModel> lstm;
  double lstm_train_seconds = 0.0;
  std::optional<ReferenceProfile> lstm_profile;
  std::optional<SuiteStreams> lstm_streams;

  Context() {
    train_raw = gen_normal(spec, kTrainFrames, kTrainSeed);
    reference_raw = gen_normal(spec, kReferenceFrames, kReferenceSeed);
    suite = scenario_suite(kSuiteSeed, spec);
  }

  SuiteStreams streams_for(const PredictorModel& model) const {
    SuiteStreams s;
    for (std::size_t i = 0; i < suite.size(); ++i) {
      const auto& sc = suite[i];
      auto ws = window_error_streams(model, sc.data.trace, detector, threads);
      std::vector<TraceWindow> wins;
      for (auto& w : ws) {
        wins.push_back(w.window);
        s.errors.push_back(std::move(w.errors));
        s.scenario.push_back(i);
      }
      const auto l = window_labels(sc.data.labels, wins);
      s.labels.insert(s.labels.end(), l.begin(), l.end());
    }
    return s;
  }

  const PredictorModel& lstm_model() {
    if (!lstm) {
      const auto t0 = std::chrono::steady_clock::now();
      lstm = train_predictor(train_raw, lstm_preset()).model;
      lstm_train_seconds = seconds_since(t0);
    }
    return *lstm;
  }
  const ReferenceProfile& lstm_ref() {
    if (!lstm_profile) lstm_profile = build_profile(lstm_model(), reference_raw, detector.rollout, threads);
    return *lstm_profile;
  }
  const SuiteStreams& lstm_suite() {
    if (!lstm_streams) lstm_streams = streams_for(lstm_model());
    return *lstm_streams;
  }
};

std::vector<bool> ks_verdicts(const ReferenceProfile& prof, const SuiteStreams& s, double alpha,
                              std::size_t subsample_every) {
  std::vector<bool> out;
  for (const auto& e : s.errors) out.push_back(ks_verdict_for_errors(prof, e, alpha, subsample_every).reject);
  return out;
}

std::string counts_str(const ConfusionCounts& c) {
  return fmt("tp=%zu fp=%zu tn=%zu fn=%zu", c.tp, c.fp, c.tn, c.fn);
}

// Central 99% interval of Binomial(n, p) by exact tail sums.
std::pair<std::size_t, std::size_t> binomial_99(std::size_t n, double p) {
  std::vector<double> pmf(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double lk = std::lgamma(double(n) + 1) - std::lgamma(double(k) + 1) - std::lgamma(double(n - k) + 1) +
                      double(k) * std::log(p) + double(n - k) * std::log1p(-p);
    pmf[k] = std::exp(lk);
  }
  std::size_t lo = 0, hi = n;
  double tail = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    tail += pmf[k];
    if (tail >= 0.005) {
      lo = k;
      break;
    }
  }
  tail = 0.0;
  for (std::size_t k = n + 1; k-- > 0;) {
    tail += pmf[k];
    if (tail >= 0.005) {
      hi = k;
      break;
    }
  }
  return {lo, hi};
}

Outcome ac1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  int equal = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto a = testing::random_sample(rng, 1 + rng.below(50), 1 + rng.below(30));
    auto b = testing::random_sample(rng, 1 + rng.below(50), 1 + rng.below(30));
    equal += ks_statistic(a, b) == testing::brute_ks(a, b);
  }
  const double secs = seconds_since(t0);
  return {equal == 1000 && secs < 10.0, fmt("bit-equal to brute force on %d/1000 instances in %.2f s", equal, secs)};
}

Outcome ac2() {
  const double c05 = c_alpha(0.05), c01 = c_alpha(0.01);
  const auto v = ks_reject(0.2, 100, 100, 0.05);
  const bool ok = std::abs(c05 - 1.3581) <= 1e-3 && std::abs(c01 - 1.6276) <= 1e-3 &&
                  c05 == std::sqrt(-std::log(0.025) / 2) && c01 == std::sqrt(-std::log(0.005) / 2) && v.reject &&
                  std::abs(v.threshold - 0.1921) < 1e-4;
  return {ok, fmt("c(0.05)=%.6f c(0.01)=%.6f; n=m=100 D=0.2 threshold=%.6f reject=%d", c05, c01, v.threshold,
                  int(v.reject))};
}

Outcome ac3() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto I = 1 + rng.below(4), H = 1 + rng.below(8), T = 2 + rng.below(5);
    auto p = testing::random_lstm(rng, I, H);
    auto seqs = testing::random_sequences(rng, 1 + rng.below(3), T, I);
    worst = std::max(worst, testing::lstm_max_relative_fd_error(p, seqs));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0, fmt("max relative error %.3g over 20 instances in %.2f s", worst, secs)};
}

Outcome ac4(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& model = ctx.lstm_model();
  const auto held = gen_normal(ctx.spec, kHeldOutFrames, kHeldOutSeed);
  const Trace z = model.prepare(held);
  const auto pred = one_step_predictions(model, z.frames());
  const RowMatrix target = z.frames().bottomRows(pred.rows());
  const double trained = snr(target, pred);
  // Training mean is the origin of the normalized space.
  const double mean_pred = snr(target, RowMatrix::Zero(target.rows(), target.cols()));
  auto zero_cfg = lstm_preset();
  zero_cfg.lstm.epochs = 0;
  const auto untrained = train_predictor(ctx.train_raw, zero_cfg).model;
  const double zero_epoch = snr(target, one_step_predictions(untrained, z.frames()));
  const double secs = seconds_since(t0);
  const bool ok = trained >= 6.0 && std::abs(mean_pred) <= 0.2 && zero_epoch < 1.0 && secs < 600.0;
  return {ok, fmt("SNR trained %.2f dB, mean predictor %.3f dB, zero-epoch %.3f dB; %.0f s (training %.0f s)",
                  trained, mean_pred, zero_epoch, secs, ctx.lstm_train_seconds)};
}

Outcome ac5(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& s = ctx.lstm_suite();
  const auto lstm_counts = confusion(ks_verdicts(ctx.lstm_ref(), s, 0.05, ctx.detector.subsample_every), s.labels);
  const auto lstm_report = metrics(lstm_counts);

  const auto crbm = train_predictor(ctx.train_raw, crbm_defaults()).model;
  const auto crbm_prof = build_profile(crbm, ctx.reference_raw, ctx.detector.rollout, ctx.threads);
  const auto cs = ctx.streams_for(crbm);
  const auto crbm_counts = confusion(ks_verdicts(crbm_prof, cs, 0.05, ctx.detector.subsample_every), cs.labels);
  const auto crbm_report = metrics(crbm_counts);
  const double secs = seconds_since(t0);
  const bool ok = lstm_report.f1 >= 0.99 && lstm_counts.fn == 0 && crbm_report.f1 >= 0.90 && secs < 1200.0;
  return {ok, fmt("LSTM+KS F1=%.4f (%s); CRBM+KS F1=%.4f (%s); %.0f s", lstm_report.f1,
                  counts_str(lstm_counts).c_str(), crbm_report.f1, counts_str(crbm_counts).c_str(), secs)};
}

Outcome ac6(Context& ctx) {
  const auto& model = ctx.lstm_model();
  const auto& prof = ctx.lstm_ref();
  const auto& s = ctx.lstm_suite();
  const auto ks = confusion(ks_verdicts(prof, s, 0.05, ctx.detector.subsample_every), s.labels);

  const auto [mean, sd] = profile_moments(prof);
  std::vector<bool> hard_v;
  for (const auto& e : s.errors) hard_v.push_back(hard_window_verdict(0, e, mean, sd).reject);
  const auto hard = confusion(hard_v, s.labels);

  const Trace z_train = model.prepare(ctx.train_raw);
  const double f1_ks = metrics(ks).f1;
  bool ok = f1_ks >= metrics(hard).f1 && hard.errors() > ks.errors();
  std::string detail = fmt("F1 ks=%.4f hard=%.4f (errors ks=%zu hard=%zu)", f1_ks, metrics(hard).f1, ks.errors(),
                           hard.errors());
  for (auto kind : {BaselineKind::Ema, BaselineKind::Pca, BaselineKind::Knn}) {
    const BaselineDetector det(kind, z_train.frames());
    std::vector<bool> v, labels;
    for (const auto& sc : ctx.suite) {
      const Trace z = model.prepare(sc.data.trace);
      const auto wins = window_iter(z, ctx.detector.window_frames, ctx.detector.window_frames);
      const auto wv = det.window_verdicts(z.frames(), wins);
      const auto wl = window_labels(sc.data.labels, wins);
      v.insert(v.end(), wv.begin(), wv.end());
      labels.insert(labels.end(), wl.begin(), wl.end());
    }
    const double f1 = metrics(confusion(v, labels)).f1;
    ok = ok && f1_ks >= f1;
    detail += fmt(" %s=%.4f", std::string(baseline_name(kind)).c_str(), f1);
  }
  return {ok, detail};
}

Outcome ac7(Context& ctx) {
  const auto& s = ctx.lstm_suite();
  const std::vector<double> alphas{0.5, 0.2, 0.1, 0.05, 0.01};
  const auto rows = sweep_alpha(ctx.lstm_ref(), s.errors, s.labels, alphas, ctx.detector.subsample_every);
  bool ok = rows.size() == alphas.size();
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ok = ok && rows[i].report.recall == 1.0;
    if (i > 0) {
      ok = ok && rows[i].report.false_positive_rate <= rows[i - 1].report.false_positive_rate;
      for (std::size_t w = 0; w < rows[i].verdicts.size(); ++w) {
        ok = ok && (!rows[i].verdicts[w] || rows[i - 1].verdicts[w]);
      }
    }
    detail += fmt("%salpha=%g FPR=%.3f recall=%.3f", i ? "; " : "", rows[i].alpha, rows[i].report.false_positive_rate,
                  rows[i].report.recall);
  }
  return {ok, detail};
}

Outcome ac8(Context& ctx) {
  const auto& model = ctx.lstm_model();
  const auto& prof = ctx.lstm_ref();
  std::vector<std::vector<double>> windows;
  for (std::uint64_t seed = 5000; seed < 5010; ++seed) {
    for (auto& w : window_error_streams(model, gen_normal(ctx.spec, 40000, seed), ctx.detector, ctx.threads)) {
      windows.push_back(std::move(w.errors));
    }
  }
  bool ok = windows.size() == 200;
  std::string detail = fmt("%zu clean windows", windows.size());
  for (double alpha : {0.1, 0.05}) {
    std::size_t rejected = 0;
    for (const auto& e : windows) rejected += ks_verdict_for_errors(prof, e, alpha, ctx.detector.subsample_every).reject;
    const auto [lo, hi] = binomial_99(windows.size(), alpha);
    ok = ok && rejected >= lo && rejected <= hi;
    detail += fmt("; alpha=%g rejected %zu (99%% interval [%zu, %zu])", alpha, rejected, lo, hi);
  }
  return {ok, detail};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(HPC_SENTINEL_CLI) + " " + args + " >> " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Runs simulate -> train -> profile -> detect -> evaluate into `dir`.
// Returns false if any stage fails unexpectedly.
bool run_pipeline(const fs::path& dir, const std::string& threads) {
  fs::create_directories(dir);
  const auto log = dir / "console.log";
  auto p = [&](const std::string& n) { return (dir / n).string(); };
  auto run = [&](const std::string& args) { return run_cli("--threads " + threads + " " + args, log); };
  if (run("simulate --seed 11 --out-dir " + p("suite") + " --clean-frames 6000 --attack-frames 8000 --onset 2000"))
    return false;
  if (run("simulate --seed 12 --normal-frames 8000 --out " + p("train.csv"))) return false;
  if (run("simulate --seed 13 --normal-frames 8000 --out " + p("ref.csv"))) return false;
  const std::vector<std::string> names = {"testing_normal",       "attack1_overwrite_input", "attack2_saturate_input",
                                          "attack3_disable_pid",  "attack4_fixed_output",    "attack5_cascaded_pid",
                                          "attack6_overwrite_output"};
  for (const std::string kind : {"lstm", "crbm"}) {
    const std::string extra = kind == "lstm" ? " --epochs 3 --hidden 16 --lr 0.05" : " --epochs 2 --hidden 16";
    if (run("train --kind " + kind + " --trace " + p("train.csv") + " --out " + p(kind + ".model") + extra))
      return false;
    if (run("profile --model " + p(kind + ".model") + " --trace " + p("ref.csv") + " --out " + p(kind + ".profile")))
      return false;
    std::string verdicts, labels;
    for (const auto& n : names) {
      const int code = run("detect --model " + p(kind + ".model") + " --profile " + p(kind + ".profile") +
                           " --trace " + p("suite/" + n + ".csv") + " --out " + p(kind + "." + n + ".ks") +
                           " --hard-out " + p(kind + "." + n + ".hard"));
      if (code != 0 && code != 2) return false;
      verdicts += " " + p(kind + "." + n + ".ks") + " " + p(kind + "." + n + ".hard");
      labels += " " + p("suite/" + n + ".labels.csv") + " " + p("suite/" + n + ".labels.csv");
    }
    if (run("evaluate --verdicts" + verdicts + " --labels" + labels + " --out " + p(kind + ".metrics.csv")))
      return false;
  }
  return true;
}

std::vector<fs::path> artifact_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "console.log") out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// 15 suite files, 2 clean traces, and per predictor kind: model, loss log,
// profile, 14 verdict files, metrics.
constexpr std::size_t kPipelineArtifacts = 15 + 2 + 2 * (3 + 14 + 1);

Outcome ac9() {
  const fs::path root = fs::temp_directory_path() / ("hpc_sentinel_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const bool ran = run_pipeline(root / "a", "1") && run_pipeline(root / "b", "3");
  if (!ran) return {false, "pipeline stage failed; see " + root.string()};
  const auto fa = artifact_files(root / "a"), fb = artifact_files(root / "b");
  std::size_t identical = 0;
  for (const auto& f : fa) identical += read_file(root / "a" / f) == read_file(root / "b" / f);
  const bool ok = fa == fb && identical == fa.size() && fa.size() == kPipelineArtifacts;
  fs::remove_all(root);
  return {ok, fmt("%zu/%zu artifacts byte-identical across two runs (threads 1 vs 3)", identical, fa.size())};
}

Outcome ac10() {
  std::vector<RowMatrix> seqs(16, testing::repeated_pair_sequence(2));
  CdConfig cfg;
  cfg.order = 2;
  cfg.n_hidden = 8;
  cfg.epochs = 300;
  cfg.cd_steps = 1;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 4;
  const auto r = cd_train(std::span<const RowMatrix>(seqs), cfg);
  const double ratio = r.epoch_mse.back() / r.epoch_mse.front();
  Rng rng(10);
  const double worst = testing::crbm_conditional_max_error(rng, 200);
  return {ratio < 0.2 && worst <= 1e-12,
          fmt("MSE epoch 300 / epoch 1 = %.4f; conditionals max deviation %.3g over 200 instances", ratio, worst)};
}

}  // namespace

int main(int argc, char** argv) {
  warning_sink() = [](const std::string&) {};
  Context ctx;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"AC1", ac1},
      {"AC2", ac2},
      {"AC3", ac3},
      {"AC4", [&] { return ac4(ctx); }},
      {"AC5", [&] { return ac5(ctx); }},
      {"AC6", [&] { return ac6(ctx); }},
      {"AC7", [&] { return ac7(ctx); }},
      {"AC8", [&] { return ac8(ctx); }},
      {"AC9", ac9},
      {"AC10", ac10},
  };
  std::string report;
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    const auto line = name + (o.pass ? " PASS " : " FAIL ") + o.detail + '\n';
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    report += line;
  }
  const auto summary = fmt("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  std::fputs(summary.c_str(), stdout);
  report += summary;
  if (argc > 1) write_file_atomic(argv[1], report);
  return failed == 0 ? 0 : 1;
}
