// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hpc_sentinel/model.hpp"
#include "hpc_sentinel/reconstruct.hpp"
#include "hpc_sentinel/simulate.hpp"
#include "oracles.hpp"

namespace hpc_sentinel {
namespace {

using testing::random_crbm;
using testing::random_lstm;


PredictorModel wrap(std::variant<LstmParams<double>, CrbmParams> params, std::size_t width) {
  PredictorModel m;
  m.channels = testing::make_channels(width);
  m.norm = NormalizationStats{Vector::Zero(static_cast<Eigen::Index>(width)),
                              Vector::Ones(static_cast<Eigen::Index>(width)), std::vector<bool>(width, false)};
  m.params = std::move(params);
  return m;
}

// Stub predictors for error_stream_frames, found by argument-dependent lookup.
struct OracleModel {
  RowMatrix truth;  // the full series; predicts it exactly
  std::size_t min_history() const { return 1; }
};

RowMatrix rollout_predict(const OracleModel& m, FramesRef history, std::size_t L) {
  // history is a block of truth; recover its end by matching rows.
  for (Eigen::Index t = history.rows(); t + static_cast<Eigen::Index>(L) <= m.truth.rows(); ++t) {
    if (m.truth.middleRows(t - history.rows(), history.rows()) == history) {
      return m.truth.middleRows(t, static_cast<Eigen::Index>(L));
    }
  }
  throw Error("history not found");
}

struct ZeroModel {
  std::size_t min_history() const { return 1; }
};

RowMatrix rollout_predict(const ZeroModel&, FramesRef history, std::size_t L) {
  return RowMatrix::Zero(static_cast<Eigen::Index>(L), history.cols());
}

TEST(Rollout, SingleStepEqualsOneStepPredictors) {
  Rng rng(1);
  auto lstm = wrap(random_lstm(rng, 3, 4), 3);
  RowMatrix hist = testing::random_frames(rng, 6, 3);
  EXPECT_EQ(Vector(rollout_predict(lstm, hist, 1).row(0).transpose()), predict_next(lstm.lstm(), hist));

  auto crbm = wrap(random_crbm(rng, 3, 5, 2), 3);
  EXPECT_EQ(Vector(rollout_predict(crbm, hist, 1).row(0).transpose()),
            crbm_predict(crbm.crbm(), hist.bottomRows(2), crbm.meanfield_iters));
}

TEST(Rollout, ZeroLstmGivesZeroFrames) {
  Rng rng(2);
  auto m = wrap(LstmParams<double>::zeros(2, 3), 2);
  auto out = rollout_predict(m, testing::random_frames(rng, 4, 2), 5);
  EXPECT_EQ(out.rows(), 5);
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Rollout, HandUnrolledThreeSteps) {
  Rng rng(3);
  auto m = wrap(random_lstm(rng, 2, 3), 2);
  RowMatrix hist = testing::random_frames(rng, 4, 2);
  // Each step: run history plus previous predictions from the zero state.
  RowMatrix grown = hist;
  RowMatrix expected(3, 2);
  for (int i = 0; i < 3; ++i) {
    Vector next = predict_next(m.lstm(), grown);
    expected.row(i) = next.transpose();
    RowMatrix bigger(grown.rows() + 1, 2);
    bigger << grown, next.transpose();
    grown = bigger;
  }
  EXPECT_LT((rollout_predict(m, hist, 3) - expected).cwiseAbs().maxCoeff(), 1e-12);

  auto c = wrap(random_crbm(rng, 2, 4, 2), 2);
  RowMatrix ctx = hist.bottomRows(2);
  RowMatrix cexp(3, 2);
  for (int i = 0; i < 3; ++i) {
    Vector next = crbm_predict(c.crbm(), ctx, c.meanfield_iters);
    cexp.row(i) = next.transpose();
    RowMatrix shifted(2, 2);
    shifted << ctx.row(1), next.transpose();
    ctx = shifted;
  }
  EXPECT_LT((rollout_predict(c, hist, 3) - cexp).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rollout, InsufficientHistory) {
  Rng rng(4);
  auto c = wrap(random_crbm(rng, 2, 3, 4), 2);
  EXPECT_THROW(rollout_predict(c, RowMatrix::Zero(3, 2), 2), Error);
  auto l = wrap(random_lstm(rng, 2, 3), 2);
  EXPECT_THROW(rollout_predict(l, RowMatrix(0, 2), 2), Error);
}

TEST(ReconstructionError, Examples) {
  RowMatrix r(2, 1), o(2, 1);
  r << 1, 2;
  o << 1.5, 2.5;
  EXPECT_EQ(reconstruction_error(r, o), 0.5);
  EXPECT_EQ(reconstruction_error(o, r), 0.5);
  EXPECT_EQ(reconstruction_error(r, r), 0.0);
  EXPECT_THROW(reconstruction_error(r, RowMatrix::Zero(3, 1)), DimensionError);
}

TEST(ReconstructionError, NonNegativeSymmetricHomogeneous) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto L = 1 + rng.below(6), C = 1 + rng.below(5);
    RowMatrix a = testing::random_frames(rng, L, C, -3, 3), b = testing::random_frames(rng, L, C, -3, 3);
    const double e = reconstruction_error(a, b);
    EXPECT_GE(e, 0.0);
    EXPECT_EQ(e, reconstruction_error(b, a));
    const double s = rng.uniform(0.1, 10);
    EXPECT_NEAR(reconstruction_error(s * a, s * b), s * s * e, 1e-9 * s * s * std::max(1.0, e));
  }
}

TEST(ErrorStream, CountFormulaByEnumeration) {
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    RolloutConfig cfg{1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(6)};
    const auto T = rng.below(60);
    std::size_t brute = 0;
    for (std::size_t t = cfg.warmup; t + cfg.lookahead <= T; t += cfg.stride) ++brute;
    EXPECT_EQ(error_stream_count(T, cfg), brute);
    EXPECT_EQ(error_stream_frames(ZeroModel{}, RowMatrix::Zero(static_cast<Eigen::Index>(T), 1), cfg).size(), brute);
  }
}

TEST(ErrorStream, BoundaryAndShort) {
  RolloutConfig cfg{3, 5, 1};
  EXPECT_EQ(error_stream_frames(ZeroModel{}, RowMatrix::Ones(8, 2), cfg).size(), 1u);
  EXPECT_TRUE(error_stream_frames(ZeroModel{}, RowMatrix::Ones(7, 2), cfg).empty());
  // Zero predictor on an all-ones block: each E is L * channels.
  EXPECT_EQ(error_stream_frames(ZeroModel{}, RowMatrix::Ones(8, 2), cfg)[0], 6.0);
}

TEST(ErrorStream, PerfectPredictorAllZero) {
  Rng rng(7);
  OracleModel m{testing::random_frames(rng, 80, 3)};
  auto e = error_stream_frames(m, m.truth, RolloutConfig{4, 10, 3});
  ASSERT_FALSE(e.empty());
  EXPECT_TRUE(std::all_of(e.begin(), e.end(), [](double v) { return v == 0.0; }));
}

TEST(ErrorStream, PureAndThreadCountIndependent) {
  Rng rng(8);
  auto m = wrap(random_lstm(rng, 3, 4), 3);
  Trace t(testing::make_channels(3), testing::random_frames(rng, 300, 3));
  RolloutConfig cfg{5, 20, 7};
  auto a = error_stream(m, t, cfg, 1);
  EXPECT_EQ(a, error_stream(m, t, cfg, 1));
  EXPECT_EQ(a, error_stream(m, t, cfg, 4));
  EXPECT_TRUE(std::all_of(a.begin(), a.end(), [](double v) { return v >= 0.0; }));
}

TEST(ErrorStream, WarmupShorterThanCrbmOrder) {
  Rng rng(9);
  auto m = wrap(random_crbm(rng, 2, 3, 8), 2);
  EXPECT_THROW(error_stream_frames(m, RowMatrix::Zero(50, 2), RolloutConfig{2, 4, 1}), ConfigError);
}

TEST(Profile, SortsAndRecordsProvenance) {
  auto p = profile_from_errors({3, 1, 2, 5, 4, 9, 8, 7, 6, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24,
                                25, 26, 27, 28, 29, 30},
                               RolloutConfig{}, "abc", 99);
  EXPECT_TRUE(std::is_sorted(p.samples.begin(), p.samples.end()));
  EXPECT_EQ(p.samples.front(), 1.0);
  EXPECT_EQ(p.samples[2], 3.0);
  EXPECT_EQ(p.source_length, 99u);
  try {
    profile_from_errors(std::vector<double>(29, 1.0), RolloutConfig{}, "abc", 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("reference too short"), std::string::npos);
  }
}

TEST(Profile, FileRoundTripAndRejections) {
  std::vector<double> errs(35);
  for (std::size_t i = 0; i < errs.size(); ++i) errs[i] = 0.1 * static_cast<double>(i) + 1e-17;
  auto p = profile_from_errors(errs, RolloutConfig{7, 30, 7}, "f00d", 1234);
  const auto text = serialize_profile(p);
  auto q = parse_profile(text);
  EXPECT_EQ(q.samples, p.samples);
  EXPECT_EQ(q.rollout, p.rollout);
  EXPECT_EQ(q.model_fingerprint, "f00d");
  EXPECT_EQ(serialize_profile(q), text);

  std::string unsorted = text;
  unsorted.replace(unsorted.find("\n0.1"), 4, "\n9.1");
  EXPECT_THROW(parse_profile(unsorted), IngestionError);
  EXPECT_THROW(parse_profile("# nope\n"), IngestionError);
}

TEST(Profile, BuildIsDeterministicAndBytesStable) {
  Rng rng(10);
  auto spec = WorkloadSpec::plc_default();
  auto raw = gen_normal(spec, 800, 3);
  auto pruned = prune_zero_channels(raw);
  PredictorModel m;
  m.channels = raw.channels();
  m.norm = fit_normalization(pruned.trace, pruned.pruned_mask);
  m.params = random_lstm(rng, pruned.trace.num_channels(), 4, 0.1);
  auto a = build_profile(m, raw, RolloutConfig{});
  auto b = build_profile(m, raw, RolloutConfig{}, 3);
  EXPECT_EQ(serialize_profile(a), serialize_profile(b));
  EXPECT_EQ(a.model_fingerprint, model_fingerprint(m));
  EXPECT_EQ(a.samples.size(), error_stream_count(800, RolloutConfig{}));
}

TEST(Snr, IdentityMeanAndCap) {
  Rng rng(11);
  RowMatrix obs = testing::random_frames(rng, 200, 3, 0, 100);
  EXPECT_EQ(snr(obs, obs), kSnrCapDb);
  RowMatrix mean_pred = obs.colwise().mean().replicate(obs.rows(), 1);
  EXPECT_NEAR(snr(obs, mean_pred), 0.0, 1e-12);
}

TEST(Snr, WhiteNoiseFixedPredictor) {
  Rng rng(12);
  RowMatrix noise(10000, 2);
  for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = rng.gaussian();
  RowMatrix fixed = RowMatrix::Constant(10000, 2, 0.05);
  EXPECT_LE(snr(noise, fixed), 0.5);
  EXPECT_LE(snr(noise, RowMatrix::Zero(10000, 2)), 0.5);
}

TEST(Snr, ZeroVarianceChannelSkipped) {
  testing::WarningCapture warnings;
  RowMatrix obs(4, 2);
  obs << 1, 5, 2, 5, 3, 5, 4, 5;
  RowMatrix pred = obs;
  pred.col(0).setConstant(2.5);
  EXPECT_NEAR(snr(obs, pred), 0.0, 1e-12);
  EXPECT_EQ(warnings.messages.size(), 1u);
  EXPECT_THROW(snr(obs.col(1), obs.col(1)), Error);
}

TEST(OneStep, AlignmentMatchesPredictors) {
  Rng rng(13);
  RowMatrix f = testing::random_frames(rng, 12, 2);
  auto l = wrap(random_lstm(rng, 2, 3), 2);
  auto p = one_step_predictions(l, f);
  ASSERT_EQ(p.rows(), 11);
  EXPECT_LT((Vector(p.row(5).transpose()) - predict_next(l.lstm(), f.topRows(6))).cwiseAbs().maxCoeff(), 1e-12);
  auto c = wrap(random_crbm(rng, 2, 3, 3), 2);
  auto q = one_step_predictions(c, f);
  ASSERT_EQ(q.rows(), 9);
  EXPECT_EQ(Vector(q.row(0).transpose()), crbm_predict(c.crbm(), f.topRows(3), c.meanfield_iters));
}

TEST(ModelFile, LstmRoundTripAndFingerprint) {
  Rng rng(14);
  auto m = wrap(random_lstm(rng, 3, 2), 3);
  m.norm.mean << 1.5, 2.25, 1e-300;
  m.norm.stddev << 0.1, 3, 7;
  const auto text = serialize_model(m);
  auto back = parse_model(text);
  EXPECT_EQ(serialize_model(back), text);
  EXPECT_EQ(back.lstm(), m.lstm());
  EXPECT_EQ(model_fingerprint(back), model_fingerprint(m));
  EXPECT_EQ(model_fingerprint(m).size(), 64u);
  auto other = m;
  std::get<0>(other.params).b_y[0] += 1e-15;
  EXPECT_NE(model_fingerprint(other), model_fingerprint(m));
}

TEST(ModelFile, CrbmRoundTripWithPruning) {
  Rng rng(15);
  PredictorModel m;
  m.channels = testing::make_channels(4);
  m.norm = NormalizationStats{Vector::Ones(2), Vector::Constant(2, 2.0), {false, true, true, false}};
  m.params = random_crbm(rng, 2, 3, 2);
  m.meanfield_iters = 7;
  testing::TempDir dir;
  save_model(m, dir / "m.model");
  auto back = load_model(dir / "m.model");
  EXPECT_EQ(back.kind(), ModelKind::Crbm);
  EXPECT_EQ(back.crbm(), m.crbm());
  EXPECT_EQ(back.meanfield_iters, 7);
  EXPECT_EQ(back.norm.pruned_mask, m.norm.pruned_mask);
  EXPECT_EQ(serialize_model(back), serialize_model(m));
}

TEST(ModelFile, Rejections) {
  EXPECT_THROW(parse_model("garbage"), IngestionError);
  Rng rng(16);
  auto text = serialize_model(wrap(random_lstm(rng, 2, 2), 2));
  auto cut = text.substr(0, text.find("tensor b_y"));
  EXPECT_THROW(parse_model(cut), IngestionError);
  EXPECT_THROW(parse_model_kind("gru"), Error);
}

TEST(ModelPrepare, RejectsForeignSchema) {
  Rng rng(17);
  auto m = wrap(random_lstm(rng, 2, 2), 2);
  auto chans = testing::make_channels(2);
  chans[1].thread_name = "other";
  EXPECT_THROW(m.prepare(Trace(chans, RowMatrix::Zero(3, 2))), DimensionError);
  EXPECT_THROW(m.prepare(Trace(testing::make_channels(3), RowMatrix::Zero(3, 3))), DimensionError);
}

}  // namespace
}  // namespace hpc_sentinel
