// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

// Synthetic multi-threaded PLC workload in counter space. Every active channel
// follows
//
//   det_c(t)   = base_c + amp_c * |sin(2*pi*(t mod P_c)/P_c + phase_c)|
//   value_c(t) = round(max(0, det_c(t) + sum_{s->c} gain * (det_s(t) - base_s)
//                             + noise_std * N(0, 1)))
//
// Zero channels emit exactly 0. Attacks rewrite det_c (or the final value,
// for frozen outputs) from the onset frame on. The counter-level attack
// signatures are a model: a removed code block lowers cycle and instruction
// counts, an added IF raises branch counts, a fixed output stops varying.

#ifndef HPC_SENTINEL_SIMULATE_HPP_
#define HPC_SENTINEL_SIMULATE_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hpc_sentinel/io.hpp"
#include "hpc_sentinel/rng.hpp"
#include "hpc_sentinel/trace.hpp"

namespace hpc_sentinel {

inline constexpr std::size_t kCountersPerThread = 4;

/// Mean and stddev of |sin| over a uniform phase.
inline constexpr double kRectifiedSineMean = 2.0 / std::numbers::pi;
inline const double kRectifiedSineStd = std::sqrt(0.5 - 4.0 / (std::numbers::pi * std::numbers::pi));

struct ChannelWave {
  double base_level = 0.0;
  double amplitude = 0.0;
  std::size_t period = 2;
  double phase = 0.0;
};

struct Coupling {
  std::size_t source = 0;
  std::size_t target = 0;
  double gain = 0.0;
};

struct WorkloadSpec {
  std::vector<std::string> thread_names;
  std::vector<ChannelWave> waves;  // one per channel, thread-major
  double noise_std = 0.0;
  std::vector<Coupling> couplings;
  std::vector<std::size_t> zero_channels;
  double sample_rate_hz = 1000.0;
  // Threads whose counters the attack transforms touch by default.
  std::size_t input_thread = 0;
  std::size_t pid_thread = 0;
  std::size_t output_thread = 0;

  std::size_t n_threads() const { return thread_names.size(); }
  std::size_t n_channels() const { return thread_names.size() * kCountersPerThread; }

  static std::size_t channel(std::size_t thread, CounterKind kind) {
    return thread * kCountersPerThread + static_cast<std::size_t>(kind);
  }

  bool is_zero(std::size_t c) const {
    return std::find(zero_channels.begin(), zero_channels.end(), c) != zero_channels.end();
  }

  /// Stddev of the periodic component of channel c.
  double wave_std(std::size_t c) const { return waves[c].amplitude * kRectifiedSineStd; }

  std::vector<ChannelSpec> channels() const {
    std::vector<ChannelSpec> out;
    for (std::size_t t = 0; t < n_threads(); ++t) {
      for (auto kind : kAllCounters) out.push_back({thread_names[t], kind, out.size()});
    }
    return out;
  }

  void validate() const {
    if (thread_names.empty()) throw ConfigError("workload has no threads");
    if (waves.size() != n_channels()) throw ConfigError("workload needs one wave per channel");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    for (const auto& w : waves) {
      if (w.period < 2) throw ConfigError("wave periods must be >= 2");
      if (!(w.base_level >= 0.0) || !(w.amplitude >= 0.0)) throw ConfigError("base and amplitude must be >= 0");
    }
    for (const auto& c : couplings) {
      if (c.source >= n_channels() || c.target >= n_channels()) throw ConfigError("coupling channel out of range");
    }
    for (auto z : zero_channels) {
      if (z >= n_channels()) throw ConfigError("zero channel out of range");
    }
    if (input_thread >= n_threads() || pid_thread >= n_threads() || output_thread >= n_threads()) {
      throw ConfigError("attack role thread out of range");
    }
  }

  /// 23 Wago PLC threads, 10 of them idle (40 always-zero channels).
  static WorkloadSpec plc_default() {
    WorkloadSpec s;
    s.thread_names = {"spi1",
                      "codesys3",
                      "com_DBUS_worker",
                      "0ms_Watch_Thread",
                      "CAAEventTast",
                      "SchedExeption",
                      "Schedule",
                      "WagoAsyncRtHigh",
                      "WagoAsyncRtMed",
                      "WagoAsyncRtLow",
                      "WagoAsyncHigh",
                      "WagoAsyncMed",
                      "WagoAsyncLow",
                      "WagoAsyncBusCyc",
                      "WagoAsyncBusEvt0",
                      "WagoAsyncBusEvt1",
                      "WagoAsyncBusEvt2",
                      "WagoAsyncBusEvt3",
                      "ProcessorLoadWa",
                      "KBUS_CYCLE_TASK",
                      "ModbusSlaveTCP",
                      "PLC_Task",
                      "Main"};
    const std::vector<std::size_t> idle = {7, 8, 9, 10, 11, 12, 14, 15, 16, 17};
    static constexpr std::size_t kPeriods[] = {23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73};
    // Relative event rates per counter kind: cycles, instructions, branches, L1 misses.
    static constexpr double kBase[] = {3.0, 2.4, 1.6, 1.2};
    static constexpr double kAmp[] = {1.0, 0.8, 0.6, 0.5};
    s.noise_std = 8.0;
    std::size_t active = 0;
    for (std::size_t t = 0; t < s.thread_names.size(); ++t) {
      const bool is_idle = std::find(idle.begin(), idle.end(), t) != idle.end();
      const double scale = 120.0 + 20.0 * static_cast<double>(active % 5);
      const std::size_t period = kPeriods[active % std::size(kPeriods)];
      const double phase = 0.37 * static_cast<double>(active);
      for (std::size_t k = 0; k < kCountersPerThread; ++k) {
        ChannelWave w;
        w.period = period;
        if (!is_idle) {
          w.base_level = kBase[k] * scale;
          w.amplitude = kAmp[k] * scale;
          w.phase = phase + 0.15 * static_cast<double>(k);
        }
        s.waves.push_back(w);
        if (is_idle) s.zero_channels.push_back(s.waves.size() - 1);
      }
      if (!is_idle) ++active;
    }
    s.input_thread = 19;   // KBUS_CYCLE_TASK
    s.pid_thread = 21;     // PLC_Task
    s.output_thread = 13;  // WagoAsyncBusCyc
    s.couplings = {
        {channel(21, CounterKind::Cycles), channel(6, CounterKind::Cycles), 0.3},
        {channel(19, CounterKind::Instructions), channel(21, CounterKind::Instructions), 0.2},
        {channel(21, CounterKind::Branches), channel(13, CounterKind::Branches), 0.25},
    };
    return s;
  }
};

enum class AttackKind { OverwriteInput, SaturateInput, DisablePid, FixedOutput, CascadedPid, OverwriteOutput };

inline constexpr std::array<AttackKind, 6> kAllAttacks = {AttackKind::OverwriteInput, AttackKind::SaturateInput,
                                                          AttackKind::DisablePid,     AttackKind::FixedOutput,
                                                          AttackKind::CascadedPid,    AttackKind::OverwriteOutput};

inline std::string_view attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::OverwriteInput: return "overwrite_input";
    case AttackKind::SaturateInput: return "saturate_input";
    case AttackKind::DisablePid: return "disable_pid";
    case AttackKind::FixedOutput: return "fixed_output";
    case AttackKind::CascadedPid: return "cascaded_pid";
    case AttackKind::OverwriteOutput: return "overwrite_output";
  }
  return "unknown";
}

struct AttackSpec {
  AttackKind kind = AttackKind::OverwriteInput;
  std::size_t onset_frame = 0;
  // In units of the affected channel's wave stddev, except CascadedPid where
  // the load is multiplied by (1 + magnitude). DisablePid and FixedOutput
  // ignore it.
  double magnitude = 1.0;
  std::vector<std::size_t> affected_channels;  // empty = kind default
};

/// Channels an attack touches when none are given explicitly.
inline std::vector<std::size_t> default_affected_channels(const WorkloadSpec& spec, AttackKind kind) {
  auto thread_channels = [](std::size_t thread) {
    std::vector<std::size_t> out;
    for (auto k : kAllCounters) out.push_back(WorkloadSpec::channel(thread, k));
    return out;
  };
  switch (kind) {
    case AttackKind::OverwriteInput:
    case AttackKind::SaturateInput: return thread_channels(spec.input_thread);
    case AttackKind::DisablePid:
    case AttackKind::CascadedPid:
      return {WorkloadSpec::channel(spec.pid_thread, CounterKind::Cycles),
              WorkloadSpec::channel(spec.pid_thread, CounterKind::Instructions)};
    case AttackKind::FixedOutput:
    case AttackKind::OverwriteOutput: return thread_channels(spec.output_thread);
  }
  throw ConfigError("unknown attack kind");
}

struct LabeledTrace {
  Trace trace;
  std::vector<bool> labels;  // true = attack active
};

namespace detail {

inline double rectified_wave(const ChannelWave& w, std::size_t t) {
  const double theta =
      2.0 * std::numbers::pi * static_cast<double>(t % w.period) / static_cast<double>(w.period) + w.phase;
  return std::abs(std::sin(theta));
}

// Shared by gen_normal and inject_attack so the pre-onset prefix is
// bit-identical: the noise stream is consumed the same way either way.
inline LabeledTrace generate(const WorkloadSpec& spec, const AttackSpec* attack, std::size_t duration,
                             std::uint64_t seed) {
  spec.validate();
  const std::size_t C = spec.n_channels();
  std::vector<bool> zero(C, false);
  for (auto z : spec.zero_channels) zero[z] = true;

  std::vector<bool> affected(C, false);
  std::size_t branch_bump_channel = C;
  if (attack) {
    if (attack->kind < AttackKind::OverwriteInput || attack->kind > AttackKind::OverwriteOutput) {
      throw ConfigError("unknown attack kind");
    }
    if (attack->onset_frame > duration) throw ConfigError("attack onset beyond trace end");
    if (!(attack->magnitude > 0.0)) throw ConfigError("attack magnitude must be > 0");
    auto chans = attack->affected_channels.empty() ? default_affected_channels(spec, attack->kind)
                                                   : attack->affected_channels;
    for (auto c : chans) {
      if (c >= C) throw ConfigError("affected channel out of range");
      affected[c] = true;
    }
    if (attack->kind == AttackKind::SaturateInput) {
      branch_bump_channel = WorkloadSpec::channel(spec.input_thread, CounterKind::Branches);
    }
  }

  Rng rng(seed);
  RowMatrix frames = RowMatrix::Zero(static_cast<Eigen::Index>(duration), static_cast<Eigen::Index>(C));
  std::vector<double> det(C), frozen(C, 0.0);
  LabeledTrace out;
  out.labels.assign(duration, false);

  for (std::size_t t = 0; t < duration; ++t) {
    const bool active = attack && t >= attack->onset_frame;
    out.labels[t] = active;
    for (std::size_t c = 0; c < C; ++c) {
      const auto& w = spec.waves[c];
      det[c] = w.base_level + w.amplitude * rectified_wave(w, t);
    }
    if (active) {
      for (std::size_t c = 0; c < C; ++c) {
        if (!affected[c] && c != branch_bump_channel) continue;
        const auto& w = spec.waves[c];
        const double s = spec.wave_std(c);
        switch (attack->kind) {
          case AttackKind::OverwriteInput:
            det[c] = w.base_level + w.amplitude * kRectifiedSineMean + attack->magnitude * s;
            break;
          case AttackKind::SaturateInput:
            if (affected[c]) det[c] = std::min(det[c], w.base_level + attack->magnitude * s);
            if (c == branch_bump_channel) det[c] += attack->magnitude * s;
            break;
          case AttackKind::DisablePid: det[c] = w.base_level; break;
          case AttackKind::CascadedPid: det[c] *= 1.0 + attack->magnitude; break;
          case AttackKind::OverwriteOutput: det[c] += attack->magnitude * s; break;
          case AttackKind::FixedOutput: break;
        }
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      if (zero[c]) {
        frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = 0.0;
        continue;
      }
      double v = det[c];
      for (const auto& cp : spec.couplings) {
        if (cp.target == c && !zero[cp.source]) v += cp.gain * (det[cp.source] - spec.waves[cp.source].base_level);
      }
      if (spec.noise_std > 0.0) v += spec.noise_std * rng.gaussian();
      v = std::nearbyint(std::max(0.0, v));
      if (active && attack->kind == AttackKind::FixedOutput && affected[c]) {
        if (t == attack->onset_frame) frozen[c] = v;
        v = frozen[c];
      }
      frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = v;
    }
  }
  out.trace = Trace(spec.channels(), std::move(frames), spec.sample_rate_hz);
  return out;
}

}  // namespace detail

/// Attack-free trace of `duration` frames.
inline Trace gen_normal(const WorkloadSpec& spec, std::size_t duration, std::uint64_t seed) {
  if (duration < 1) throw ConfigError("duration must be >= 1");
  return detail::generate(spec, nullptr, duration, seed).trace;
}

/// The normal trace for `seed` with `attack` applied from its onset frame.
inline LabeledTrace inject_attack(const WorkloadSpec& spec, const AttackSpec& attack, std::size_t duration,
                                  std::uint64_t seed) {
  if (duration < 1) throw ConfigError("duration must be >= 1");
  return detail::generate(spec, &attack, duration, seed);
}

struct Scenario {
  std::string name;
  std::optional<AttackSpec> attack;
  std::uint64_t seed = 0;
  LabeledTrace data;
};

struct SuiteParams {
  std::size_t clean_frames = 20000;
  std::size_t attack_frames = 60000;
  std::size_t onset_frame = 4000;
};

inline double default_magnitude(AttackKind kind) {
  switch (kind) {
    case AttackKind::OverwriteInput: return 2.0;
    case AttackKind::SaturateInput: return 1.0;
    case AttackKind::DisablePid: return 1.0;
    case AttackKind::FixedOutput: return 1.0;
    case AttackKind::CascadedPid: return 1.0;
    case AttackKind::OverwriteOutput: return 2.0;
  }
  return 1.0;
}

/// Testing-normal trace plus one trace per attack kind. Scenario i uses seed
/// `seed + 1 + i`.
inline std::vector<Scenario> scenario_suite(std::uint64_t seed, const WorkloadSpec& spec = WorkloadSpec::plc_default(),
                                            const SuiteParams& params = {}) {
  std::vector<Scenario> out;
  Scenario normal;
  normal.name = "testing_normal";
  normal.seed = seed + 1;
  normal.data.trace = gen_normal(spec, params.clean_frames, normal.seed);
  normal.data.labels.assign(params.clean_frames, false);
  out.push_back(std::move(normal));
  int index = 1;
  for (auto kind : kAllAttacks) {
    Scenario s;
    s.name = "attack" + std::to_string(index) + "_" + std::string(attack_name(kind));
    s.seed = seed + 1 + static_cast<std::uint64_t>(index);
    s.attack = AttackSpec{kind, params.onset_frame, default_magnitude(kind), {}};
    s.data = inject_attack(spec, *s.attack, params.attack_frames, s.seed);
    out.push_back(std::move(s));
    ++index;
  }
  return out;
}

inline std::string serialize_labels(const std::vector<bool>& labels) {
  std::string out = "frame,attack\n";
  for (std::size_t t = 0; t < labels.size(); ++t) out += std::to_string(t) + (labels[t] ? ",1\n" : ",0\n");
  return out;
}

inline std::vector<bool> parse_labels(std::string_view text) {
  LineReader reader(text);
  std::string_view line;
  if (!reader.next(line) || trim(line) != "frame,attack") throw IngestionError(1, "expected 'frame,attack' header");
  std::vector<bool> out;
  while (reader.next(line)) {
    if (trim(line).empty()) continue;
    auto f = split(line, ',');
    std::size_t frame = 0;
    auto fs = trim(f[0]);
    if (f.size() != 2 || std::from_chars(fs.data(), fs.data() + fs.size(), frame).ec != std::errc{} ||
        frame != out.size()) {
      throw IngestionError(reader.line_no(), "malformed label row");
    }
    auto flag = trim(f[1]);
    if (flag != "0" && flag != "1") throw IngestionError(reader.line_no(), "label must be 0 or 1");
    out.push_back(flag == "1");
  }
  return out;
}

/// Trace-file header lines recording how a trace was generated.
inline std::vector<std::string> generator_header(std::uint64_t seed) {
  return {std::string("generator=") + Rng::kAlgorithm, "seed=" + std::to_string(seed)};
}

/// Human-readable provenance for a suite.
inline std::string describe_suite(const std::vector<Scenario>& suite, const WorkloadSpec& spec, std::uint64_t seed) {
  std::string out = "# hpc-sentinel scenario suite\n";
  out += "seed=" + std::to_string(seed) + '\n';
  out += std::string("generator=") + Rng::kAlgorithm + '\n';
  out += "threads=" + std::to_string(spec.n_threads()) + '\n';
  out += "channels=" + std::to_string(spec.n_channels()) + '\n';
  out += "zero_channels=" + std::to_string(spec.zero_channels.size()) + '\n';
  out += "noise_std=" + format_double(spec.noise_std) + '\n';
  out += "input_thread=" + spec.thread_names[spec.input_thread] + '\n';
  out += "pid_thread=" + spec.thread_names[spec.pid_thread] + '\n';
  out += "output_thread=" + spec.thread_names[spec.output_thread] + '\n';
  for (const auto& s : suite) {
    out += "\n[" + s.name + "]\n";
    out += "seed=" + std::to_string(s.seed) + '\n';
    out += "frames=" + std::to_string(s.data.trace.num_frames()) + '\n';
    if (s.attack) {
      out += "kind=" + std::string(attack_name(s.attack->kind)) + '\n';
      out += "onset_frame=" + std::to_string(s.attack->onset_frame) + '\n';
      out += "magnitude=" + format_double(s.attack->magnitude) + '\n';
      out += "affected_channels=";
      auto chans = s.attack->affected_channels.empty() ? default_affected_channels(spec, s.attack->kind)
                                                       : s.attack->affected_channels;
      for (std::size_t i = 0; i < chans.size(); ++i) out += (i ? "," : "") + spec.channels()[chans[i]].name();
      out += '\n';
    } else {
      out += "kind=none\n";
    }
  }
  return out;
}

/// Digest over every scenario's trace and label bytes.
inline std::string suite_digest(const std::vector<Scenario>& suite) {
  std::string all;
  for (const auto& s : suite) {
    all += s.name + '\n';
    all += save_trace(s.data.trace);
    all += serialize_labels(s.data.labels);
  }
  return sha256_hex(all);
}

}  // namespace hpc_sentinel

#endif  // HPC_SENTINEL_SIMULATE_HPP_
