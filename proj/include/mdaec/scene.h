#ifndef MDAEC_SCENE_H_
#define MDAEC_SCENE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdaec/resampler.h"

namespace mdaec {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

double Distance(const Vec3& a, const Vec3& b);

enum class PlaybackMode { kUncorrelated, kCorrelated };

// Which acoustic path an echo-path change re-draws. kDevice2 moves the
// loudspeaker of device two (h12). kMic1 changes the device-one
// loudspeaker-to-microphone path only (h11). kBoth does both at once.
enum class PathChange { kDevice2, kMic1, kBoth };

struct EpcEvent {
  double time_s = 0.0;
  PathChange change = PathChange::kDevice2;
  friend bool operator==(const EpcEvent&, const EpcEvent&) = default;
};

// Changes at 15, 30 and 45 s: device two, device-one path, both.
std::vector<EpcEvent> DefaultEpcSchedule();

struct SceneConfig {
  Vec3 room{6.0, 6.0, 4.0};
  double t60 = 0.3;
  // Loudspeakers of device one and two, device-one microphone, talker.
  Vec3 speaker1{1.0, 1.0, 1.0};
  Vec3 speaker2{4.0, 4.0, 1.5};
  Vec3 mic1{2.0, 1.5, 1.2};
  Vec3 talker{3.0, 3.0, 1.7};
  SroPpm sro;  // device two relative to device one
  double snr_db = 40.0;
  PlaybackMode mode = PlaybackMode::kUncorrelated;
  bool double_talk = false;
  std::vector<EpcEvent> epc_schedule;
  uint64_t seed = 0;
  double fs = 16000.0;
};

inline constexpr double kWallMargin = 0.75;
inline constexpr double kMinSourceMicDistance = 0.5;

// Uniform room in [5,5,3]..[8,8,6] m, t60 in [0.2, 0.5] s, positions at
// least kWallMargin from every wall and sources at least
// kMinSourceMicDistance from the microphone. Deterministic per seed.
SceneConfig SampleScene(uint64_t seed);

struct RirOptions {
  // Overrides the calibrated wall absorption (1 = anechoic).
  std::optional<double> absorption;
  // Default: ceil(t60 * fs) + kRirPad.
  std::optional<size_t> length;
};

inline constexpr int kFracDelayHalfWidth = 16;
inline constexpr size_t kRirPad = 2 * kFracDelayHalfWidth;

// Uniform wall absorption giving reverberation time t60 under Eyring's
// formula.
double AbsorptionForT60(const Vec3& room, double t60);

// Uniform wall absorption for which the image-source energy decay between
// src and mic has a -60 dB time of t60 (Schroeder fit from -5 to -35 dB).
// The closed-form estimate above decays up to ~1.7x too slowly in a
// shoebox image lattice, whose late tail is carried by near-axial images
// and by the low-frequency build-up of same-sign reflections.
double CalibratedAbsorption(const Vec3& room, const Vec3& src, const Vec3& mic,
                            double t60, double fs);

// Shoebox image-source RIR with windowed-sinc fractional delays. All images
// arriving within the RIR length are included. Throws std::invalid_argument
// for positions outside the room, t60 <= 0, or source and microphone closer
// than 1 cm.
std::vector<double> ImageSourceRir(const Vec3& room, const Vec3& src,
                                   const Vec3& mic, double t60, double fs,
                                   const RirOptions& options = {});

// First sample the direct sound can reach after interpolation.
size_t DirectPathOnset(const Vec3& src, const Vec3& mic, double fs);

// Linear convolution truncated to out_len samples.
std::vector<double> FftConvolve(std::span<const double> x,
                                std::span<const double> h, size_t out_len);

// One set of acoustic paths, valid from start_s until the next epoch.
struct RirEpoch {
  double start_s = 0.0;
  Vec3 speaker1;
  Vec3 speaker2;
  std::vector<double> h11;
  std::vector<double> h12;
  std::vector<double> h_talker;
};

// RIR epochs for the configured schedule; re-drawn positions keep the wall
// margin and are deterministic per (seed, event index).
std::vector<RirEpoch> ApplyEpc(const SceneConfig& cfg,
                               std::span<const EpcEvent> schedule);

inline constexpr double kEpcCrossfadeS = 0.010;

struct RenderedScene {
  std::vector<double> mic;
  std::vector<double> echo[2];  // h11 * x1, SRO-affected h12 * x2
  std::vector<double> near_end;
  std::vector<double> far_end[2];
  std::vector<double> noise;
  std::vector<RirEpoch> epochs;
  double fs = 16000.0;

  // echo[0] + echo[1]
  std::vector<double> TotalEcho() const;
};

// Renders the microphone of device one. x2 is convolved with h12 and then
// stretched by cfg.sro; sensor noise is scaled to cfg.snr_db below the
// power of the noise-free mixture. z may be empty (echo only).
RenderedScene Render(const SceneConfig& cfg, std::span<const double> x1,
                     std::span<const double> x2, std::span<const double> z);

// Same, reusing precomputed RIR epochs (they depend only on geometry).
RenderedScene Render(const SceneConfig& cfg, std::span<const double> x1,
                     std::span<const double> x2, std::span<const double> z,
                     const std::vector<RirEpoch>& epochs);

std::string ToString(PlaybackMode mode);
std::string ToString(PathChange change);
PlaybackMode ParsePlaybackMode(const std::string& s);
PathChange ParsePathChange(const std::string& s);

}  // namespace mdaec

#endif  // MDAEC_SCENE_H_
