// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

// hpc-sentinel: simulate -> train -> profile -> detect -> evaluate.
//
// Exit codes: 0 success (detect: every window accepted), 2 detect rejected at
// least one window, 3 any error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hpc_sentinel/hpc_sentinel.hpp"

namespace fs = std::filesystem;
using namespace hpc_sentinel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitReject = 2;
constexpr int kExitError = 3;

struct SimulateArgs {
  std::uint64_t seed = 7;
  std::string out_dir;
  std::string out;
  std::size_t normal_frames = 0;
  SuiteParams suite;
};

struct TrainArgs {
  std::string trace;
  std::string out;
  std::string kind = "lstm";
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> batch;
  std::optional<std::uint64_t> seed;
  std::optional<double> init_scale;
  std::size_t sequence_length = TrainConfig{}.sequence_length;
  double clip = TrainConfig{}.gradient_clip;
  std::size_t order = CdConfig{}.order;
  int cd_steps = CdConfig{}.cd_steps;
  int meanfield_iters = PredictorConfig{}.meanfield_iters;
};

struct ProfileArgs {
  std::string model;
  std::string trace;
  std::string out;
  RolloutConfig rollout;
};

struct DetectArgs {
  std::string model;
  std::string profile;
  std::string trace;
  std::string out;
  std::string hard_out;
  DetectorConfig detector;
};

struct EvaluateArgs {
  std::vector<std::string> verdicts;
  std::vector<std::string> labels;
  std::vector<double> alphas = {0.5, 0.2, 0.1, 0.05, 0.01};
  std::string out;
};

std::string loss_log_path(const std::string& model_path) { return model_path + ".loss.csv"; }

int run_simulate(const SimulateArgs& a) {
  const auto spec = WorkloadSpec::plc_default();
  if (a.normal_frames > 0) {
    if (a.out.empty()) throw ConfigError("--normal-frames needs --out");
    save_trace(gen_normal(spec, a.normal_frames, a.seed), a.out, generator_header(a.seed));
    return kExitOk;
  }
  if (a.out_dir.empty()) throw ConfigError("simulate needs --out-dir (or --normal-frames with --out)");
  if (a.suite.onset_frame >= a.suite.attack_frames) throw ConfigError("--onset must be below --attack-frames");

  const auto suite = scenario_suite(a.seed, spec, a.suite);
  std::vector<std::pair<fs::path, std::string>> files;
  const fs::path dir(a.out_dir);
  for (const auto& s : suite) {
    files.emplace_back(dir / (s.name + ".csv"), save_trace(s.data.trace, generator_header(s.seed)));
    files.emplace_back(dir / (s.name + ".labels.csv"), serialize_labels(s.data.labels));
  }
  files.emplace_back(dir / "suite.cfg", describe_suite(suite, spec, a.seed));

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw Error("cannot use output directory " + dir.string());
  // All-or-nothing: a failure part way removes what was already placed.
  std::vector<fs::path> written;
  try {
    for (const auto& [path, bytes] : files) {
      write_file_atomic(path, bytes);
      written.push_back(path);
    }
  } catch (...) {
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
  std::printf("wrote %zu scenarios to %s (digest %s)\n", suite.size(), dir.c_str(), suite_digest(suite).c_str());
  return kExitOk;
}

int run_train(const TrainArgs& a) {
  const Trace trace = load_trace(a.trace);
  PredictorConfig cfg;
  cfg.kind = parse_model_kind(a.kind);
  cfg.meanfield_iters = a.meanfield_iters;
  auto& l = cfg.lstm;
  auto& c = cfg.crbm;
  if (a.epochs) l.epochs = c.epochs = *a.epochs;
  if (a.learning_rate) l.learning_rate = c.learning_rate = *a.learning_rate;
  if (a.hidden) l.hidden_size = c.n_hidden = *a.hidden;
  if (a.batch) l.batch_size = c.batch_size = *a.batch;
  if (a.seed) l.seed = c.seed = *a.seed;
  if (a.init_scale) l.init_scale = c.init_scale = *a.init_scale;
  l.sequence_length = a.sequence_length;
  l.gradient_clip = a.clip;
  c.order = a.order;
  c.cd_steps = a.cd_steps;

  std::string log = cfg.kind == ModelKind::Lstm ? "epoch,loss\n" : "epoch,reconstruction_mse\n";
  auto result = train_predictor(trace, cfg, [&](int epoch, double loss) {
    log += std::to_string(epoch) + ',' + format_double(loss) + '\n';
    std::fprintf(stderr, "epoch %d loss %.6g\n", epoch, loss);
  });
  save_model(result.model, a.out);
  write_file_atomic(loss_log_path(a.out), log);
  std::printf("model %s fingerprint %s\n", a.out.c_str(), model_fingerprint(result.model).c_str());
  return kExitOk;
}

int run_profile(const ProfileArgs& a, unsigned threads) {
  a.rollout.validate();
  const auto model = load_model(a.model);
  const auto trace = load_trace(a.trace, model.channels);
  const auto profile = build_profile(model, trace, a.rollout, threads);
  save_profile(profile, a.out);
  std::printf("profile %s: %zu samples\n", a.out.c_str(), profile.samples.size());
  return kExitOk;
}

int run_detect(DetectArgs a, unsigned threads) {
  const auto model = load_model(a.model);
  const auto profile = load_profile(a.profile);
  const auto fingerprint = model_fingerprint(model);
  check_fingerprint(profile, fingerprint);
  // The test stream must be produced exactly like the reference.
  a.detector.rollout = profile.rollout;
  a.detector.validate();
  const auto trace = load_trace(a.trace, model.channels);

  const auto streams = window_error_streams(model, trace, a.detector, threads);
  std::vector<WindowVerdict> ks;
  std::vector<HardWindowVerdict> hard;
  const auto [mean, stddev] = profile_moments(profile);
  std::size_t rejected = 0;
  for (const auto& w : streams) {
    ks.push_back({w.window.start, ks_verdict_for_errors(profile, w.errors, a.detector.alpha, a.detector.subsample_every)});
    hard.push_back(hard_window_verdict(w.window.start, w.errors, mean, stddev));
    rejected += ks.back().verdict.reject ? 1 : 0;
  }
  write_file_atomic(a.out, serialize_ks_verdicts(ks, a.detector.window_frames, fingerprint));
  if (!a.hard_out.empty()) {
    write_file_atomic(a.hard_out, serialize_hard_verdicts(hard, a.detector.window_frames, fingerprint));
  }
  std::printf("%zu of %zu windows rejected at alpha %g\n", rejected, ks.size(), a.detector.alpha);
  return rejected > 0 ? kExitReject : kExitOk;
}

int run_evaluate(const EvaluateArgs& a) {
  if (a.verdicts.size() != a.labels.size()) {
    throw ConfigError("--verdicts and --labels must pair up (" + std::to_string(a.verdicts.size()) + " vs " +
                      std::to_string(a.labels.size()) + ")");
  }
  if (a.alphas.empty()) throw ConfigError("--alphas must not be empty");
  for (std::size_t i = 0; i < a.alphas.size(); ++i) {
    if (!(a.alphas[i] > 0.0 && a.alphas[i] < 1.0)) throw ConfigError("alphas must lie in (0, 1)");
    if (i > 0 && !(a.alphas[i] < a.alphas[i - 1])) throw ConfigError("alphas must be sorted descending");
  }

  // Per detector: verdicts (per alpha for KS) and window labels, pooled over files.
  std::vector<bool> ks_labels, hard_labels;
  std::vector<std::vector<bool>> ks_verdicts(a.alphas.size());
  std::vector<bool> ks_recorded, hard_verdicts;
  for (std::size_t f = 0; f < a.verdicts.size(); ++f) {
    const auto table = parse_verdicts(read_file(a.verdicts[f]));
    const auto frame_labels = parse_labels(read_file(a.labels[f]));
    const auto windows = window_iter(frame_labels.size(), table.window_frames, table.window_frames);
    if (windows.size() != table.window_starts.size()) {
      throw DimensionError(a.verdicts[f] + " has " + std::to_string(table.window_starts.size()) + " windows, " +
                           a.labels[f] + " implies " + std::to_string(windows.size()));
    }
    for (std::size_t w = 0; w < windows.size(); ++w) {
      if (windows[w].start != table.window_starts[w]) {
        throw DimensionError(a.verdicts[f] + ": window " + std::to_string(w) + " starts at frame " +
                             std::to_string(table.window_starts[w]) + ", expected " + std::to_string(windows[w].start));
      }
    }
    const auto labels = window_labels(frame_labels, windows);
    if (table.detector == "ks") {
      ks_labels.insert(ks_labels.end(), labels.begin(), labels.end());
      ks_recorded.insert(ks_recorded.end(), table.reject.begin(), table.reject.end());
      for (std::size_t i = 0; i < a.alphas.size(); ++i) {
        const auto v = table.reject_at(a.alphas[i]);
        ks_verdicts[i].insert(ks_verdicts[i].end(), v.begin(), v.end());
      }
    } else {
      hard_labels.insert(hard_labels.end(), labels.begin(), labels.end());
      hard_verdicts.insert(hard_verdicts.end(), table.reject.begin(), table.reject.end());
    }
  }

  std::string csv(kMetricsCsvHeader);
  csv += '\n';
  std::cout << metrics_text_header() << '\n';
  auto emit = [&](const std::string& detector, const std::string& alpha, const MetricsReport& r) {
    csv += metrics_csv_row(detector, alpha, r) + '\n';
    std::cout << metrics_text_row(detector, alpha, r) << '\n';
  };
  std::optional<MetricsReport> ks_report, hard_report;
  if (!ks_labels.empty()) {
    for (std::size_t i = 0; i < a.alphas.size(); ++i) {
      emit("ks", format_double(a.alphas[i]), metrics(confusion(ks_verdicts[i], ks_labels)));
    }
    ks_report = metrics(confusion(ks_recorded, ks_labels));
  }
  if (!hard_labels.empty()) {
    hard_report = metrics(confusion(hard_verdicts, hard_labels));
    emit("hard", "-", *hard_report);
  }
  if (ks_report && hard_report) {
    const bool holds = ks_report->f1 >= hard_report->f1;
    const std::string footer = "# ordering F1(ks)=" + format_double(ks_report->f1) +
                               " F1(hard)=" + format_double(hard_report->f1) + (holds ? " ks>=hard" : " ks<hard");
    csv += footer + '\n';
    std::cout << footer << '\n';
  }
  if (!a.out.empty()) write_file_atomic(a.out, csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control-flow hijack detection from hardware performance counter traces"};
  app.set_config("--config", "", "Key=value config file; [section] names a subcommand");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  unsigned threads = default_threads();
  app.add_option("--threads", threads, "Worker threads for window and error-stream evaluation")
      ->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate the synthetic scenario suite or a single clean trace");
  simulate->add_option("--seed", sim.seed, "Suite seed; scenario i uses seed + 1 + i");
  simulate->add_option("--out-dir", sim.out_dir, "Directory receiving 7 traces, 7 label files and suite.cfg");
  simulate->add_option("--out", sim.out, "Output path for a single clean trace (with --normal-frames)");
  simulate->add_option("--normal-frames", sim.normal_frames, "Generate one clean trace of this many frames instead");
  simulate->add_option("--clean-frames", sim.suite.clean_frames, "Frames in the testing-normal scenario");
  simulate->add_option("--attack-frames", sim.suite.attack_frames, "Frames in each attack scenario");
  simulate->add_option("--onset", sim.suite.onset_frame, "Attack onset frame");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a next-frame predictor on a clean trace");
  train->add_option("--trace", tr.trace, "Clean training trace")->required();
  train->add_option("--out", tr.out, "Model output path; the loss curve goes to <out>.loss.csv")->required();
  train->add_option("--kind", tr.kind, "Predictor: lstm or crbm")->check(CLI::IsMember({"lstm", "crbm"}));
  train->add_option("--epochs", tr.epochs, "Training epochs [default: 20]");
  train->add_option("--lr", tr.learning_rate, "Learning rate [default: 0.01 lstm, 0.001 crbm]");
  train->add_option("--hidden", tr.hidden, "Hidden units [default: 64 lstm, 50 crbm]");
  train->add_option("--batch", tr.batch, "Mini-batch size [default: 16 lstm, 32 crbm]");
  train->add_option("--seed", tr.seed, "Initialization and shuffling seed [default: 0]");
  train->add_option("--init-scale", tr.init_scale, "Initial weight range [default: 0.08 lstm, 0.01 crbm]");
  train->add_option("--seq-len", tr.sequence_length, "LSTM training sequence length T");
  train->add_option("--clip", tr.clip, "LSTM global gradient-norm clip");
  train->add_option("--order", tr.order, "CRBM history order k");
  train->add_option("--cd-steps", tr.cd_steps, "CRBM contrastive divergence steps");
  train->add_option("--meanfield-iters", tr.meanfield_iters, "CRBM mean-field rounds per prediction");

  ProfileArgs pr;
  auto* profile = app.add_subcommand("profile", "Build the reference error profile from a clean trace");
  profile->add_option("--model", pr.model, "Trained model file")->required();
  profile->add_option("--trace", pr.trace, "Clean reference trace")->required();
  profile->add_option("--out", pr.out, "Profile output path")->required();
  profile->add_option("--lookahead", pr.rollout.lookahead, "Rollout length L");
  profile->add_option("--warmup", pr.rollout.warmup, "History frames before each rollout");
  profile->add_option("--stride", pr.rollout.stride, "Frames between successive errors");

  DetectArgs de;
  auto* detect = app.add_subcommand("detect", "Test each window of a trace against the reference profile");
  detect->add_option("--model", de.model, "Trained model file")->required();
  detect->add_option("--profile", de.profile, "Reference profile built for the same model")->required();
  detect->add_option("--trace", de.trace, "Trace to monitor")->required();
  detect->add_option("--out", de.out, "KS verdict CSV output")->required();
  detect->add_option("--hard-out", de.hard_out, "Optional hard-threshold (mean + 3 sd) verdict CSV");
  detect->add_option("--alpha", de.detector.alpha, "KS significance level");
  detect->add_option("--window", de.detector.window_frames, "Frames per window");
  detect->add_option("--subsample", de.detector.subsample_every, "Keep every n-th error of a window");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score verdict files against ground-truth labels");
  evaluate->add_option("--verdicts", ev.verdicts, "Verdict files (KS or hard)")->required();
  evaluate->add_option("--labels", ev.labels, "Label files, one per verdict file")->required();
  evaluate->add_option("--alphas", ev.alphas, "KS levels to sweep, descending")->delimiter(',');
  evaluate->add_option("--out", ev.out, "Metrics CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*train) return run_train(tr);
    if (*profile) return run_profile(pr, threads);
    if (*detect) return run_detect(de, threads);
    if (*evaluate) return run_evaluate(ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
