#include "mdaec/sro_estimator.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gtest/gtest.h"
#include "mdaec/scene.h"
#include "mdaec/signal_gen.h"
#include "test_util.h"

namespace mdaec {
namespace {

constexpr size_t kBlock = 256;

// Phase function of a pure delay on the estimator's 1024-point grid.
std::vector<Complex> DelayPhase(double delay) {
  std::vector<Complex> p(513);
  for (size_t k = 0; k < p.size(); ++k) {
    p[k] =
        std::polar(1.0, -2.0 * M_PI * static_cast<double>(k) * delay / 1024.0);
  }
  return p;
}

// Expected |coherence| of two independent Gaussian signals when K
// independent periodograms are averaged: Gamma(K) Gamma(3/2) / Gamma(K+1/2).
double IndependentCoherenceMean(double k) {
  return std::exp(std::lgamma(k) + std::lgamma(1.5) - std::lgamma(k + 0.5));
}

struct Feed {
  std::vector<double> input;
  std::vector<double> ref;
};

// Runs the estimator over whole signals in AEC-sized blocks and returns the
// estimate at `at_s` seconds and at the end.
std::pair<double, double> RunEstimator(SroEstimator& est, const Feed& f,
                                       double at_s) {
  double at = std::numeric_limits<double>::quiet_NaN();
  for (size_t i = 0; i + kBlock <= f.ref.size(); i += kBlock) {
    est.Update(std::span(f.input).subspan(i, kBlock),
               std::span(f.ref).subspan(i, kBlock), true, true);
    if (std::isnan(at) && static_cast<double>(i + kBlock) >= at_s * 16000.0) {
      at = est.epsilon_hat().ppm();
    }
  }
  return {at, est.epsilon_hat().ppm()};
}

Feed SroFeed(double ppm, double seconds, uint64_t seed) {
  Feed f;
  f.ref = test::WhiteNoise(static_cast<size_t>(seconds * 16000), seed);
  SimulateSroOptions opt;
  opt.output_len = f.ref.size();
  f.input = SimulateSro(f.ref, SroPpm(ppm), opt);
  return f;
}

TEST(Coherence, SelfCoherenceIsOne) {
  const auto x = test::WhiteNoise(8192, 1);
  const auto g = Coherence(x, x, DwacdConfig{});
  ASSERT_EQ(g.size(), 513u);
  for (const Complex& c : g) {
    EXPECT_NEAR(c.real(), 1.0, 1e-6);
    EXPECT_NEAR(c.imag(), 0.0, 1e-6);
  }
}

TEST(Coherence, IndependentSignalsMatchWelchBias) {
  double sum = 0.0;
  size_t count = 0;
  for (uint64_t t = 0; t < 40; ++t) {
    const auto a = test::WhiteNoise(8192, 100 + 2 * t);
    const auto b = test::WhiteNoise(8192, 101 + 2 * t);
    for (const Complex& c : Coherence(a, b, DwacdConfig{})) {
      sum += std::abs(c);
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  // 15 half-overlapping Hann sub-frames carry between 8 and 15 independent
  // averages.
  EXPECT_GT(mean, IndependentCoherenceMean(15.0) - 0.01);
  EXPECT_LT(mean, IndependentCoherenceMean(8.0));
  EXPECT_LT(mean, 0.3);
}

TEST(Coherence, DelayShowsAsLinearPhase) {
  const auto ref = test::WhiteNoise(8192 + 8, 3);
  const std::vector<double> r(ref.begin() + 8, ref.end());
  const std::vector<double> in(ref.begin(), ref.end() - 8);
  const auto g = Coherence(in, r, DwacdConfig{});
  size_t checked = 0;
  for (size_t k = 1; k < g.size(); ++k) {
    if (std::abs(g[k]) < 0.9) continue;
    const double expected = -2.0 * M_PI * static_cast<double>(k) * 8.0 / 1024.0;
    EXPECT_NEAR(std::remainder(std::arg(g[k]) - expected, 2.0 * M_PI), 0.0,
                0.05)
        << "bin " << k;
    ++checked;
  }
  EXPECT_GT(checked, 400u);
}

TEST(Coherence, SilentBinsAreZeroed) {
  const std::vector<double> silent(8192, 0.0);
  const auto x = test::WhiteNoise(8192, 4);
  for (const Complex& c : Coherence(silent, x, DwacdConfig{})) {
    EXPECT_EQ(c, Complex(0.0, 0.0));
  }
}

TEST(GoldenSection, IntegerDelay) {
  const auto p = DelayPhase(5.0);
  EXPECT_EQ(GccIntegerPeak(p, 10), 5);
  EXPECT_NEAR(GoldenSectionPeak(p, 5), 5.0, 1e-3);
}

TEST(GoldenSection, FractionalDelay) {
  const auto p = DelayPhase(3.25);
  const int peak = GccIntegerPeak(p, 10);
  EXPECT_EQ(peak, 3);
  EXPECT_NEAR(GoldenSectionPeak(p, peak), 3.25, 0.01);
}

TEST(GoldenSection, NegativeDelay) {
  const auto p = DelayPhase(-2.6);
  const int peak = GccIntegerPeak(p, 10);
  EXPECT_EQ(peak, -3);
  EXPECT_NEAR(GoldenSectionPeak(p, peak), -2.6, 0.01);
}

TEST(GoldenSection, NearTieIsDeterministic) {
  const auto p = DelayPhase(0.5 - 1e-4);
  const int peak = GccIntegerPeak(p, 10);
  const double a = GoldenSectionPeak(p, peak);
  const double b = GoldenSectionPeak(p, peak);
  EXPECT_GE(a, 0.49);
  EXPECT_LE(a, 0.51);
  EXPECT_EQ(a, b);
}

TEST(GoldenSection, GccAtIntegerLagMatchesInverseDft) {
  const auto p = DelayPhase(1.7);
  const RealFft fft(1024);
  const auto gcc = fft.Inverse(p);
  for (int lag = -4; lag <= 4; ++lag) {
    const size_t idx = lag >= 0 ? lag : 1024 + lag;
    EXPECT_NEAR(GccAt(p, lag) / 1024.0, gcc[idx], 1e-9);
  }
}

TEST(EnergyVad, Cases) {
  EXPECT_FALSE(EnergyVad(std::vector<double>(256, 0.0), -45.0));
  SourceSpec spec;
  spec.duration_s = 1.0;
  spec.seed = 2;
  const auto s = SynthSpeechLike(spec);
  EXPECT_TRUE(EnergyVad(s, -45.0));
  EXPECT_NEAR(RmsDbfs(std::vector<double>(100, 0.1)), -20.0, 1e-9);
}

TEST(EnergyVad, FollowsBurstMask) {
  SourceSpec spec;
  spec.duration_s = 36.0;
  spec.seed = 5;
  spec.activity = ActivityPattern::Bursts(1.0, 1.0);
  const auto s = SynthSpeechLike(spec);
  const auto mask = ActivityMask(spec);
  // 250-sample blocks tile each 1 s segment exactly.
  size_t agree = 0, total = 0, false_alarms = 0;
  for (size_t i = 0; i + 250 <= s.size(); i += 250) {
    const bool flag = EnergyVad(std::span(s).subspan(i, 250), -45.0);
    agree += flag == (mask[i] != 0);
    false_alarms += flag && mask[i] == 0;
    ++total;
  }
  EXPECT_GE(static_cast<double>(agree), 0.99 * static_cast<double>(total));
  EXPECT_EQ(false_alarms, 0u);
}

TEST(SroEstimator, EstimatesPositiveOffset) {
  SroEstimator est;
  const auto [at20, last] = RunEstimator(est, SroFeed(100.0, 30.0, 7), 20.0);
  EXPECT_GE(at20, 99.0);
  EXPECT_LE(at20, 101.0);
  EXPECT_GE(last, 99.0);
  EXPECT_LE(last, 101.0);
  EXPECT_GT(est.updates_count(), 0);
}

TEST(SroEstimator, SignFollowsOffset) {
  SroEstimator est;
  const auto [at20, last] = RunEstimator(est, SroFeed(-100.0, 25.0, 8), 20.0);
  EXPECT_NEAR(at20, -100.0, 1.0);
  EXPECT_LT(last, 0.0);
}

TEST(SroEstimator, ZeroOffsetThroughEchoPath) {
  Feed f;
  f.ref = test::WhiteNoise(15 * 16000, 9);
  const auto h = ImageSourceRir({6, 5, 3}, {1, 1, 1}, {3, 2, 1.5}, 0.3, 16000);
  f.input = FftConvolve(f.ref, h, f.ref.size());
  SroEstimator est;
  const auto [at10, last] = RunEstimator(est, f, 10.0);
  EXPECT_NEAR(at10, 0.0, 0.5);
  EXPECT_NEAR(last, 0.0, 0.5);
}

TEST(SroEstimator, LargeOffsetMovesAlignment) {
  SroEstimator est;
  const auto [at, last] = RunEstimator(est, SroFeed(900.0, 40.0, 10), 20.0);
  EXPECT_NEAR(at, 900.0, 5.0);
  EXPECT_NEAR(last, 900.0, 5.0);
  // 40 s at 900 ppm accumulate 576 samples of delay.
  EXPECT_NEAR(static_cast<double>(est.drift().integer_shift_applied), 576.0,
              15.0);
}

TEST(SroEstimator, HistoryOutgrowsLongDrift) {
  // Small segments keep the run short: the ring starts at 4 segments and
  // must grow once the integer shift passes 2 segments.
  DwacdConfig cfg;
  cfg.segment_len = 512;
  cfg.welch_hop = 32;
  SroEstimator est(cfg);
  const Feed f = SroFeed(1000.0, 120.0, 16);
  for (size_t i = 0; i + kBlock <= f.ref.size(); i += kBlock) {
    est.Update(std::span(f.input).subspan(i, kBlock),
               std::span(f.ref).subspan(i, kBlock), true, true);
  }
  EXPECT_GT(est.drift().integer_shift_applied, 1500);
  EXPECT_NEAR(est.epsilon_hat().ppm(), 1000.0, 20.0);
}

TEST(SroEstimator, InactiveVadFreezesState) {
  const Feed f = SroFeed(100.0, 20.0, 11);
  SroEstimator est;
  size_t i = 0;
  for (; i + kBlock <= 10 * 16000; i += kBlock) {
    est.Update(std::span(f.input).subspan(i, kBlock),
               std::span(f.ref).subspan(i, kBlock), true, true);
  }
  // Segments still dominated by active samples may update once more; from
  // one segment on, nothing may change.
  for (const size_t flush = i + 8192; i < flush; i += kBlock) {
    est.Update(std::span(f.input).subspan(i, kBlock),
               std::span(f.ref).subspan(i, kBlock), false, true);
  }
  const double before = est.epsilon_hat().ppm();
  const auto phase = est.averaged_phase();
  const int64_t updates = est.updates_count();
  for (; i + kBlock <= f.ref.size(); i += kBlock) {
    const bool in_on = (i / kBlock) % 2 == 0;
    EXPECT_FALSE(est.Update(std::span(f.input).subspan(i, kBlock),
                            std::span(f.ref).subspan(i, kBlock), in_on, !in_on)
                     .has_value());
  }
  EXPECT_EQ(est.epsilon_hat().ppm(), before);
  EXPECT_EQ(est.averaged_phase(), phase);
  EXPECT_EQ(est.updates_count(), updates);
}

TEST(SroEstimator, NeverActiveStaysAtZero) {
  const Feed f = SroFeed(100.0, 10.0, 12);
  SroEstimator est;
  for (size_t i = 0; i + kBlock <= f.ref.size(); i += kBlock) {
    est.Update(std::span(f.input).subspan(i, kBlock),
               std::span(f.ref).subspan(i, kBlock), false, false);
  }
  EXPECT_EQ(est.epsilon_hat().ppm(), 0.0);
  EXPECT_EQ(est.updates_count(), 0);
  for (const Complex& c : est.averaged_phase()) EXPECT_EQ(c, Complex(0.0, 0.0));
}

TEST(SroEstimator, NonFiniteInputLeavesStateUntouched) {
  const Feed f = SroFeed(50.0, 3.0, 13);
  SroEstimator est;
  for (size_t i = 0; i + kBlock <= f.ref.size(); i += kBlock) {
    est.Update(std::span(f.input).subspan(i, kBlock),
               std::span(f.ref).subspan(i, kBlock), true, true);
  }
  const int64_t seen = est.samples_seen();
  const auto phase = est.averaged_phase();
  std::vector<double> bad(kBlock, 0.0);
  bad[17] = std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> good(kBlock, 0.0);
  EXPECT_THROW(est.Update(bad, good, true, true), std::invalid_argument);
  EXPECT_THROW(est.Update(good, bad, true, true), std::invalid_argument);
  EXPECT_EQ(est.samples_seen(), seen);
  EXPECT_EQ(est.averaged_phase(), phase);
}

TEST(SroEstimator, AveragedPhaseIsBounded) {
  const auto ref = test::WhiteNoise(20 * 16000, 14);
  SimulateSroOptions opt;
  opt.output_len = ref.size();
  auto input = SimulateSro(ref, SroPpm(-60.0), opt);
  const auto noise = test::WhiteNoise(input.size(), 15, 0.3);
  for (size_t i = 0; i < input.size(); ++i) input[i] += noise[i];
  SroEstimator est;
  for (size_t i = 0; i + kBlock <= ref.size(); i += kBlock) {
    est.Update(std::span(input).subspan(i, kBlock),
               std::span(ref).subspan(i, kBlock), true, true);
    for (const Complex& c : est.averaged_phase()) {
      ASSERT_LE(std::abs(c), 1.0 + 1e-9);
    }
  }
}

TEST(DwacdConfig, Validation) {
  DwacdConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  cfg.smoothing = 1.0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = DwacdConfig{};
  cfg.welch_hop = 500;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = DwacdConfig{};
  cfg.temporal_distance = 8;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
}

}  // namespace
}  // namespace mdaec
