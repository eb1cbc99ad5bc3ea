#include "mdaec/scene.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "gtest/gtest.h"
#include "test_util.h"

namespace mdaec {
namespace {

constexpr double kFs = 16000.0;
const Vec3 kRoom{6.0, 6.0, 4.0};

bool KeepsWallMargin(const Vec3& p, const Vec3& room) {
  return p.x >= kWallMargin && p.y >= kWallMargin && p.z >= kWallMargin &&
         p.x <= room.x - kWallMargin && p.y <= room.y - kWallMargin &&
         p.z <= room.z - kWallMargin;
}

// Backward-integrated energy decay in dB relative to the total.
std::vector<double> EnergyDecayDb(const std::vector<double>& h) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  for (double& v : edc) v = 10.0 * std::log10(v / acc);
  return edc;
}

// Time at which the decay curve first reaches -60 dB.
double MinusSixtyTime(const std::vector<double>& h, double fs) {
  const auto edc = EnergyDecayDb(h);
  for (size_t i = 0; i < edc.size(); ++i) {
    if (edc[i] <= -60.0) return static_cast<double>(i) / fs;
  }
  return std::numeric_limits<double>::infinity();
}

// Decay fitted between -5 and -35 dB, extrapolated to -60 dB.
double T30(const std::vector<double>& h, double fs) {
  const auto edc = EnergyDecayDb(h);
  double n = 0, st = 0, sd = 0, stt = 0, sxd = 0;
  for (size_t i = 0; i < edc.size(); ++i) {
    if (edc[i] > -5.0 || edc[i] < -35.0) continue;
    const double t = static_cast<double>(i) / fs;
    n += 1;
    st += t;
    sd += edc[i];
    stt += t * t;
    sxd += t * edc[i];
  }
  return -60.0 * (n * stt - st * st) / (n * sxd - st * sd);
}

SceneConfig SmallScene(uint64_t seed) {
  SceneConfig cfg = SampleScene(seed);
  cfg.t60 = 0.2;
  return cfg;
}

TEST(SampleScene, IsDeterministic) {
  const SceneConfig a = SampleScene(17);
  const SceneConfig b = SampleScene(17);
  EXPECT_EQ(a.room, b.room);
  EXPECT_EQ(a.t60, b.t60);
  EXPECT_EQ(a.speaker1, b.speaker1);
  EXPECT_EQ(a.speaker2, b.speaker2);
  EXPECT_EQ(a.mic1, b.mic1);
  EXPECT_EQ(a.talker, b.talker);
  EXPECT_NE(SampleScene(18).room, a.room);
}

TEST(SampleScene, ThousandSeedsRespectRangesAndMargins) {
  double t60_min = 1.0, t60_max = 0.0;
  int lower_half = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    const SceneConfig c = SampleScene(seed);
    ASSERT_GE(c.room.x, 5.0);
    ASSERT_LE(c.room.x, 8.0);
    ASSERT_GE(c.room.y, 5.0);
    ASSERT_LE(c.room.y, 8.0);
    ASSERT_GE(c.room.z, 3.0);
    ASSERT_LE(c.room.z, 6.0);
    ASSERT_GE(c.t60, 0.2);
    ASSERT_LE(c.t60, 0.5);
    for (const Vec3& p : {c.speaker1, c.speaker2, c.mic1, c.talker}) {
      ASSERT_TRUE(KeepsWallMargin(p, c.room)) << "seed " << seed;
    }
    for (const Vec3& p : {c.speaker1, c.speaker2, c.talker}) {
      ASSERT_GE(Distance(p, c.mic1), kMinSourceMicDistance) << "seed " << seed;
    }
    t60_min = std::min(t60_min, c.t60);
    t60_max = std::max(t60_max, c.t60);
    if (c.t60 < 0.35) ++lower_half;
  }
  EXPECT_LT(t60_min, 0.21);
  EXPECT_GT(t60_max, 0.49);
  EXPECT_GT(lower_half, 400);
  EXPECT_LT(lower_half, 600);
}

TEST(ImageSourceRir, AnechoicLimitIsTheDirectPath) {
  // 80 samples of travel: an integer delay, so the interpolator is a single
  // tap.
  const double d = 80.0 * kSpeedOfSound / kFs;
  const Vec3 mic{2.0, 2.0, 1.5};
  const Vec3 src{2.0 + d, 2.0, 1.5};
  RirOptions opt;
  opt.absorption = 1.0;
  const auto h = ImageSourceRir(kRoom, src, mic, 0.3, kFs, opt);
  const double gain = 1.0 / (4.0 * std::numbers::pi * d);
  for (size_t i = 0; i < h.size(); ++i) {
    ASSERT_NEAR(h[i], i == 80 ? gain : 0.0, 1e-9 * gain) << "sample " << i;
  }
}

TEST(ImageSourceRir, DirectPeakFollowsTravelTime) {
  const Vec3 mic{2.0, 2.0, 1.5};
  const Vec3 src{3.7, 2.0, 1.5};
  const auto h = ImageSourceRir(kRoom, src, mic, 0.3, kFs);
  const auto peak = std::max_element(
      h.begin(), h.end(),
      [](double a, double b) { return std::abs(a) < std::abs(b); });
  EXPECT_NEAR(static_cast<double>(peak - h.begin()), 79.0, 1.0);
  EXPECT_EQ(h.size(), static_cast<size_t>(std::ceil(0.3 * kFs)) + kRirPad);
}

TEST(ImageSourceRir, DecayMatchesTargetT60) {
  const Vec3 mic{2.2, 3.1, 1.4};
  const Vec3 src{4.5, 1.7, 1.9};
  const double absorption = CalibratedAbsorption(kRoom, src, mic, 0.3, kFs);
  RirOptions opt;
  opt.absorption = absorption;
  // Long enough that truncation does not shape the decay curve.
  opt.length = static_cast<size_t>(kFs);
  const auto h = ImageSourceRir(kRoom, src, mic, 0.3, kFs, opt);
  const double t = MinusSixtyTime(h, kFs);
  EXPECT_GE(t, 0.24);
  EXPECT_LE(t, 0.36);
  EXPECT_NEAR(T30(h, kFs), 0.3, 0.3 * 0.05);
}

TEST(ImageSourceRir, CalibrationHoldsAcrossSampledRooms) {
  for (uint64_t seed = 20; seed < 24; ++seed) {
    const SceneConfig c = SampleScene(seed);
    RirOptions opt;
    opt.absorption =
        CalibratedAbsorption(c.room, c.speaker1, c.mic1, c.t60, kFs);
    opt.length = static_cast<size_t>(3.0 * c.t60 * kFs);
    const auto h = ImageSourceRir(c.room, c.speaker1, c.mic1, c.t60, kFs, opt);
    EXPECT_NEAR(T30(h, kFs), c.t60, 0.05 * c.t60) << "seed " << seed;
    EXPECT_NEAR(MinusSixtyTime(h, kFs), c.t60, 0.2 * c.t60) << "seed " << seed;
    // The closed form alone gives too little absorption for this lattice.
    EXPECT_GT(*opt.absorption, AbsorptionForT60(c.room, c.t60));
  }
}

TEST(ImageSourceRir, IsCausal) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const SceneConfig c = SampleScene(seed);
    const auto h = ImageSourceRir(c.room, c.speaker1, c.mic1, c.t60, kFs);
    double peak = 0.0;
    for (double v : h) peak = std::max(peak, std::abs(v));
    const size_t onset = DirectPathOnset(c.speaker1, c.mic1, kFs);
    for (size_t i = 0; i < onset; ++i) {
      ASSERT_LT(20.0 * std::log10(std::abs(h[i]) / peak + 1e-300), -80.0)
          << "seed " << seed << " sample " << i;
    }
  }
}

TEST(ImageSourceRir, RejectsBadGeometry) {
  const Vec3 mic{2.0, 2.0, 1.5};
  EXPECT_THROW(ImageSourceRir(kRoom, Vec3{2.005, 2.0, 1.5}, mic, 0.3, kFs),
               std::invalid_argument);
  EXPECT_THROW(ImageSourceRir(kRoom, Vec3{7.0, 2.0, 1.5}, mic, 0.3, kFs),
               std::invalid_argument);
  EXPECT_THROW(ImageSourceRir(kRoom, Vec3{3.0, 2.0, 1.5}, mic, 0.0, kFs),
               std::invalid_argument);
}

TEST(FftConvolve, MatchesDirectConvolution) {
  const auto x = test::WhiteNoise(3000, 1);
  const auto h = test::WhiteNoise(700, 2);
  const auto y = FftConvolve(x, h, 3500);
  for (size_t n = 0; n < y.size(); n += 37) {
    double acc = 0.0;
    for (size_t k = 0; k < h.size(); ++k) {
      if (n >= k && n - k < x.size()) acc += h[k] * x[n - k];
    }
    ASSERT_NEAR(y[n], acc, 1e-12) << n;
  }
}

TEST(Render, EchoOnlySingleSourceIsConvolutionPlusNoise) {
  const SceneConfig cfg = SmallScene(3);
  const auto x1 = test::WhiteNoise(32000, 4);
  const std::vector<double> x2(x1.size(), 0.0);
  const RenderedScene s = Render(cfg, x1, x2, {});
  const auto epochs = ApplyEpc(cfg, {});
  const auto d = FftConvolve(x1, epochs[0].h11, x1.size());
  EXPECT_EQ(s.echo[0], d);
  for (size_t i = 0; i < s.mic.size(); ++i) {
    ASSERT_EQ(s.echo[1][i], 0.0);
    ASSERT_EQ(s.near_end[i], 0.0);
    ASSERT_EQ(s.mic[i], d[i] + s.noise[i]);
  }
}

TEST(Render, ComponentsAddUpAndNoiseIsAt40Db) {
  SceneConfig cfg = SmallScene(5);
  cfg.sro = SroPpm(100.0);
  const auto x1 = test::WhiteNoise(48000, 6);
  const auto x2 = test::WhiteNoise(48000, 7);
  const auto z = test::WhiteNoise(48000, 8, 0.05);
  const RenderedScene s = Render(cfg, x1, x2, z);
  double peak = 0.0, worst = 0.0, clean = 0.0, noise = 0.0;
  for (size_t i = 0; i < s.mic.size(); ++i) {
    const double c = s.echo[0][i] + s.echo[1][i] + s.near_end[i];
    peak = std::max(peak, std::abs(s.mic[i]));
    worst = std::max(worst, std::abs(s.mic[i] - (c + s.noise[i])));
    clean += c * c;
    noise += s.noise[i] * s.noise[i];
  }
  EXPECT_LE(worst, 1e-12 * peak);
  EXPECT_NEAR(10.0 * std::log10(clean / noise), 40.0, 0.1);
  EXPECT_EQ(s.far_end[0], x1);
  EXPECT_EQ(s.far_end[1], x2);
}

TEST(Render, IsDeterministic) {
  SceneConfig cfg = SmallScene(9);
  cfg.sro = SroPpm(-50.0);
  const auto x1 = test::WhiteNoise(20000, 1);
  const auto x2 = test::WhiteNoise(20000, 2);
  const RenderedScene a = Render(cfg, x1, x2, {});
  const RenderedScene b = Render(cfg, x1, x2, {});
  EXPECT_EQ(a.mic, b.mic);
  EXPECT_EQ(a.noise, b.noise);
}

TEST(Render, SroStretchesOnlyTheSecondEcho) {
  SceneConfig cfg = SmallScene(10);
  const auto x1 = test::WhiteNoise(32000, 1);
  const auto x2 = test::WhiteNoise(32000, 2);
  const RenderedScene sync = Render(cfg, x1, x2, {});
  cfg.sro = SroPpm(150.0);
  const RenderedScene drift = Render(cfg, x1, x2, {});
  EXPECT_EQ(sync.echo[0], drift.echo[0]);
  EXPECT_NE(sync.echo[1], drift.echo[1]);
  SimulateSroOptions opt;
  opt.output_len = x2.size();
  EXPECT_EQ(drift.echo[1], SimulateSro(sync.echo[1], SroPpm(150.0), opt));
}

TEST(Render, RejectsMismatchedLengths) {
  const SceneConfig cfg = SmallScene(1);
  const std::vector<double> a(1000, 0.0), b(999, 0.0);
  EXPECT_THROW(Render(cfg, a, b, {}), std::invalid_argument);
  EXPECT_THROW(Render(cfg, a, a, b), std::invalid_argument);
}

TEST(ApplyEpc, EmptyScheduleGivesOneEpoch) {
  EXPECT_EQ(ApplyEpc(SmallScene(2), {}).size(), 1u);
}

TEST(ApplyEpc, ScheduleGivesFourEpochsWithIsolatedChanges) {
  const SceneConfig cfg = SmallScene(4);
  const auto schedule = DefaultEpcSchedule();
  const auto e = ApplyEpc(cfg, schedule);
  ASSERT_EQ(e.size(), 4u);
  EXPECT_EQ(e[1].start_s, 15.0);
  EXPECT_EQ(e[3].start_s, 45.0);
  // Device two moves: h11 untouched.
  EXPECT_EQ(e[1].h11, e[0].h11);
  EXPECT_NE(e[1].h12, e[0].h12);
  // Device-one path changes: h12 untouched.
  EXPECT_NE(e[2].h11, e[1].h11);
  EXPECT_EQ(e[2].h12, e[1].h12);
  // Both.
  EXPECT_NE(e[3].h11, e[2].h11);
  EXPECT_NE(e[3].h12, e[2].h12);
  for (const RirEpoch& epoch : e) {
    EXPECT_TRUE(KeepsWallMargin(epoch.speaker1, cfg.room));
    EXPECT_TRUE(KeepsWallMargin(epoch.speaker2, cfg.room));
    EXPECT_EQ(epoch.h_talker, e[0].h_talker);
  }
  // Same seed, same epochs.
  EXPECT_EQ(ApplyEpc(cfg, schedule)[3].h12, e[3].h12);
}

TEST(ApplyEpc, RenderSwitchesPathsAtTheScheduledSample) {
  SceneConfig cfg = SmallScene(6);
  cfg.epc_schedule = {{1.0, PathChange::kDevice2}};
  const auto x1 = test::WhiteNoise(32000, 1);
  const auto x2 = test::WhiteNoise(32000, 2);
  const RenderedScene s = Render(cfg, x1, x2, {});
  const auto before = FftConvolve(x2, s.epochs[0].h12, x2.size());
  const auto after = FftConvolve(x2, s.epochs[1].h12, x2.size());
  const size_t fade = static_cast<size_t>(kEpcCrossfadeS * kFs);
  for (size_t i = 0; i < 16000; ++i) ASSERT_EQ(s.echo[1][i], before[i]);
  for (size_t i = 16000 + fade; i < x2.size(); ++i)
    ASSERT_EQ(s.echo[1][i], after[i]);
  const size_t mid = 16000 + fade / 2;
  EXPECT_NEAR(s.echo[1][mid], 0.5 * (before[mid] + after[mid]), 1e-12);
  // Device one's echo is not touched by a device-two change.
  EXPECT_EQ(s.echo[0], FftConvolve(x1, s.epochs[0].h11, x1.size()));
}

TEST(ApplyEpc, ChangeOutsideSignalIsRejected) {
  SceneConfig cfg = SmallScene(6);
  cfg.epc_schedule = {{5.0, PathChange::kMic1}};
  const std::vector<double> x(16000, 0.0);
  EXPECT_THROW(Render(cfg, x, x, {}), std::invalid_argument);
}

TEST(SceneStrings, RoundTrip) {
  for (PlaybackMode m :
       {PlaybackMode::kUncorrelated, PlaybackMode::kCorrelated}) {
    EXPECT_EQ(ParsePlaybackMode(ToString(m)), m);
  }
  for (PathChange c :
       {PathChange::kDevice2, PathChange::kMic1, PathChange::kBoth}) {
    EXPECT_EQ(ParsePathChange(ToString(c)), c);
  }
  EXPECT_THROW(ParsePlaybackMode("stereo"), std::invalid_argument);
}

}  // namespace
}  // namespace mdaec
