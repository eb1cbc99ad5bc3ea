#include "mdaec/stft.h"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "gtest/gtest.h"
#include "test_util.h"

namespace mdaec {
namespace {

// Samples whose frames fully overlap, i.e. away from the first and last
// N_w - N_h samples.
size_t InteriorBegin(const StftConfig& cfg) {
  return cfg.window_size - cfg.hop_size;
}

TEST(Stft, OneSecondOfZerosGives61Frames) {
  const std::vector<double> zeros(16000, 0.0);
  const AnalysisResult r = Analyze(zeros, StftConfig{});
  ASSERT_FALSE(r.too_short);
  ASSERT_EQ(r.frames.size(), 61u);
  for (const SpectralFrame& f : r.frames) {
    ASSERT_EQ(f.bins.size(), 257u);
    for (const Complex& c : f.bins) EXPECT_EQ(c, Complex(0.0, 0.0));
  }
}

TEST(Stft, FrameIndicesAndChannelAreRecorded) {
  const auto x = test::WhiteNoise(4096, 3);
  const AnalysisResult r = Analyze(x, StftConfig{}, 7);
  for (size_t m = 0; m < r.frames.size(); ++m) {
    EXPECT_EQ(r.frames[m].frame_index, static_cast<int64_t>(m));
    EXPECT_EQ(r.frames[m].channel_id, 7);
  }
}

TEST(Stft, ShortSignalIsFlagged) {
  const std::vector<double> x(100, 1.0);
  const AnalysisResult r = Analyze(x, StftConfig{});
  EXPECT_TRUE(r.too_short);
  EXPECT_TRUE(r.frames.empty());
}

TEST(Stft, ImpulseWithRectangularWindowHasFlatSpectrum) {
  StftConfig cfg;
  cfg.window = WindowKind::kRectangular;
  std::vector<double> x(cfg.window_size, 0.0);
  x[0] = 1.0;
  const AnalysisResult r = Analyze(x, cfg);
  ASSERT_EQ(r.frames.size(), 1u);
  for (const Complex& c : r.frames[0].bins) {
    EXPECT_NEAR(c.real(), 1.0, 1e-12);
    EXPECT_NEAR(c.imag(), 0.0, 1e-12);
  }
}

TEST(Stft, RoundTripOfTenSecondsOfNoise) {
  const StftConfig cfg;
  const auto x = test::WhiteNoise(160000, 11);
  const auto t0 = std::chrono::steady_clock::now();
  const AnalysisResult r = Analyze(x, cfg);
  const std::vector<double> y = Synthesize(r.frames, cfg);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  const size_t end = y.size() - InteriorBegin(cfg);
  EXPECT_GT(test::SnrDb(x, y, InteriorBegin(cfg), end), 120.0);
  EXPECT_LT(elapsed, 1.0);
}

TEST(Stft, SineIsReconstructedSampleBySample) {
  const StftConfig cfg;
  const auto x = test::Sine(16000, 1000.0, 16000.0);
  const std::vector<double> y = Synthesize(Analyze(x, cfg).frames, cfg);
  for (size_t i = InteriorBegin(cfg); i < y.size() - InteriorBegin(cfg); ++i) {
    ASSERT_NEAR(y[i], x[i], 1e-6) << "sample " << i;
  }
}

TEST(Stft, ParsevalWithRectangularWindow) {
  StftConfig cfg;
  cfg.window = WindowKind::kRectangular;
  const auto x = test::WhiteNoise(cfg.window_size, 5);
  const AnalysisResult r = Analyze(x, cfg);
  ASSERT_EQ(r.frames.size(), 1u);
  double time_energy = 0.0;
  for (double v : x) time_energy += v * v;
  // One-sided spectrum: DC and Nyquist once, the rest twice.
  const auto& b = r.frames[0].bins;
  double freq_energy = std::norm(b.front()) + std::norm(b.back());
  for (size_t k = 1; k + 1 < b.size(); ++k)
    freq_energy += 2.0 * std::norm(b[k]);
  freq_energy /= static_cast<double>(cfg.window_size);
  EXPECT_NEAR(freq_energy / time_energy, 1.0, 1e-12);
}

TEST(Stft, AnalysisIsLinear) {
  const StftConfig cfg;
  const auto a = test::WhiteNoise(4096, 1);
  const auto b = test::WhiteNoise(4096, 2);
  std::vector<double> mix(a.size());
  for (size_t i = 0; i < a.size(); ++i) mix[i] = 2.0 * a[i] - 0.5 * b[i];
  const auto fa = Analyze(a, cfg).frames;
  const auto fb = Analyze(b, cfg).frames;
  const auto fm = Analyze(mix, cfg).frames;
  ASSERT_EQ(fa.size(), fm.size());
  for (size_t m = 0; m < fm.size(); ++m) {
    for (size_t k = 0; k < fm[m].bins.size(); ++k) {
      const Complex expected = 2.0 * fa[m].bins[k] - 0.5 * fb[m].bins[k];
      ASSERT_LT(std::abs(fm[m].bins[k] - expected), 1e-12);
    }
  }
}

TEST(Stft, SqrtHannHalfOverlapIsCola) {
  EXPECT_LT(ColaError(StftConfig{}), 1e-12);
  StftConfig quarter;
  quarter.window_size = 1024;
  quarter.hop_size = 256;
  EXPECT_LT(ColaError(quarter), 1e-12);
}

TEST(Stft, InvalidConfigsAreRejected) {
  StftConfig cfg;
  cfg.hop_size = 0;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg.hop_size = 1024;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
  cfg = StftConfig{};
  cfg.window_size = 500;
  EXPECT_THROW(cfg.Validate(), std::invalid_argument);
}

TEST(Stft, MissingFrameIsReported) {
  const StftConfig cfg;
  auto frames = Analyze(test::WhiteNoise(4096, 9), cfg).frames;
  frames.erase(frames.begin() + 4);
  try {
    Synthesize(frames, cfg);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("missing frame 4"), std::string::npos)
        << e.what();
  }
}

}  // namespace
}  // namespace mdaec
