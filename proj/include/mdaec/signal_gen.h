#ifndef MDAEC_SIGNAL_GEN_H_
#define MDAEC_SIGNAL_GEN_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mdaec {

struct ActivityPattern {
  bool bursts = false;
  double on_s = 1.0;
  double off_s = 1.0;

  static ActivityPattern Continuous() { return {}; }
  static ActivityPattern Bursts(double on_s, double off_s) {
    return {true, on_s, off_s};
  }
  bool ActiveAt(double t) const;
};

struct SourceSpec {
  double duration_s = 36.0;
  double level_dbfs = -25.0;
  ActivityPattern activity;
  uint64_t seed = 0;
  double fs = 16000.0;
};

// Speech-like test signal: white noise through four resonators whose poles
// are re-drawn every 20 ms, a fixed low-pass tilt, a 4 Hz syllabic
// envelope and the activity gate (-60 dB when off). The RMS over active
// samples equals spec.level_dbfs. Deterministic per seed.
std::vector<double> SynthSpeechLike(const SourceSpec& spec);

// Per-sample activity mask of a source, matching SynthSpeechLike's gate.
std::vector<uint8_t> ActivityMask(const SourceSpec& spec);

// Scales `signal` so that its RMS over samples with mask != 0 (all samples
// when the mask is empty) equals level_dbfs.
void NormalizeLevel(std::vector<double>& signal, double level_dbfs,
                    std::span<const uint8_t> mask = {});

enum class WavFormat { kPcm16, kFloat32 };

struct WavData {
  std::vector<double> samples;
  double fs = 0.0;
};

// Mono RIFF/WAVE writer.
void WriteWav(const std::filesystem::path& path,
              std::span<const double> samples, double fs,
              WavFormat format = WavFormat::kFloat32);

// Reads a mono PCM16 or float32 file. Throws std::runtime_error when the
// file cannot be parsed, is not mono, or its rate differs from
// expected_fs (no resampling is done).
WavData LoadWav(const std::filesystem::path& path,
                double expected_fs = 16000.0);

}  // namespace mdaec

#endif  // MDAEC_SIGNAL_GEN_H_
