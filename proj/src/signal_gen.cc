#include "mdaec/signal_gen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace mdaec {

bool ActivityPattern::ActiveAt(double t) const {
  if (!bursts) return true;
  const double period = on_s + off_s;
  const double phase = std::fmod(t, period);
  return phase < on_s;
}

std::vector<uint8_t> ActivityMask(const SourceSpec& spec) {
  const size_t n = static_cast<size_t>(std::llround(spec.duration_s * spec.fs));
  std::vector<uint8_t> mask(n);
  for (size_t i = 0; i < n; ++i) {
    mask[i] = spec.activity.ActiveAt(static_cast<double>(i) / spec.fs) ? 1 : 0;
  }
  return mask;
}

void NormalizeLevel(std::vector<double>& signal, double level_dbfs,
                    std::span<const uint8_t> mask) {
  double energy = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < signal.size(); ++i) {
    if (mask.empty() || mask[i]) {
      energy += signal[i] * signal[i];
      ++count;
    }
  }
  if (count == 0 || energy <= 0.0) return;
  const double rms = std::sqrt(energy / static_cast<double>(count));
  const double gain = std::pow(10.0, level_dbfs / 20.0) / rms;
  for (double& v : signal) v *= gain;
}

namespace {

struct Resonator {
  double a1 = 0.0;
  double a2 = 0.0;
  double y1 = 0.0;
  double y2 = 0.0;

  void Set(double radius, double angle) {
    a1 = 2.0 * radius * std::cos(angle);
    a2 = -radius * radius;
  }

  double Process(double x) {
    const double y = x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

// Gain giving the cascade unit white-noise power, from its impulse response
// (poles stay inside radius 0.97, so 512 samples capture it).
template <size_t N>
double UnitPowerGain(const std::array<Resonator, N>& sections) {
  std::array<Resonator, N> probe = sections;
  for (Resonator& r : probe) r.y1 = r.y2 = 0.0;
  double power = 0.0;
  for (int i = 0; i < 512; ++i) {
    double v = i == 0 ? 1.0 : 0.0;
    for (Resonator& r : probe) v = r.Process(v);
    power += v * v;
  }
  return 1.0 / std::sqrt(power);
}

}  // namespace

std::vector<double> SynthSpeechLike(const SourceSpec& spec) {
  if (!(spec.duration_s > 0.0)) {
    throw std::invalid_argument("SynthSpeechLike: duration must be positive");
  }
  if (!(spec.level_dbfs < 0.0)) {
    throw std::invalid_argument("SynthSpeechLike: level must be below 0 dBFS");
  }
  const std::vector<uint8_t> mask = ActivityMask(spec);
  const size_t n = mask.size();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> radius_dist(0.75, 0.97);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const size_t update_every = static_cast<size_t>(std::llround(0.02 * spec.fs));
  const double syllable_hz = 4.0;
  const double syllable_phase = 2.0 * std::numbers::pi * unit(rng);
  constexpr double kTilt = 0.9;
  constexpr double kOffGain = 1e-3;  // -60 dB

  std::array<Resonator, 4> sections;
  double cascade_gain = 1.0;
  double tilt_state = 0.0;
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    if (i % update_every == 0) {
      for (size_t s = 0; s < sections.size(); ++s) {
        // One resonator per quarter band keeps the formant-like peaks apart.
        const double lo = 0.02 + 0.22 * static_cast<double>(s);
        const double angle = std::numbers::pi * (lo + 0.22 * unit(rng));
        sections[s].Set(radius_dist(rng), angle);
      }
      cascade_gain = UnitPowerGain(sections);
    }
    double v = noise(rng);
    for (Resonator& r : sections) v = r.Process(v);
    v *= cascade_gain;
    tilt_state = v + kTilt * tilt_state;
    const double t = static_cast<double>(i) / spec.fs;
    const double envelope =
        0.25 +
        0.75 * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * syllable_hz * t +
                                     syllable_phase));
    out[i] = tilt_state * envelope * (mask[i] ? 1.0 : kOffGain);
  }
  NormalizeLevel(out, spec.level_dbfs, mask);
  return out;
}

namespace {

void PutU16(std::ofstream& f, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

void PutU32(std::ofstream& f, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t GetU16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t GetU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void WriteWav(const std::filesystem::path& path,
              std::span<const double> samples, double fs, WavFormat format) {
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  const bool pcm = format == WavFormat::kPcm16;
  const uint16_t bits = pcm ? 16 : 32;
  const uint32_t data_bytes =
      static_cast<uint32_t>(samples.size() * (bits / 8));
  const uint32_t rate = static_cast<uint32_t>(std::llround(fs));
  f.write("RIFF", 4);
  PutU32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  PutU32(f, 16);
  PutU16(f, pcm ? 1 : 3);
  PutU16(f, 1);
  PutU32(f, rate);
  PutU32(f, rate * (bits / 8));
  PutU16(f, bits / 8);
  PutU16(f, bits);
  f.write("data", 4);
  PutU32(f, data_bytes);
  for (double v : samples) {
    if (pcm) {
      const double scaled = std::round(v * 32768.0);
      const int32_t q =
          static_cast<int32_t>(std::clamp(scaled, -32768.0, 32767.0));
      PutU16(f, static_cast<uint16_t>(static_cast<int16_t>(q)));
    } else {
      const float fv = static_cast<float>(v);
      uint32_t bitsv;
      std::memcpy(&bitsv, &fv, 4);
      PutU32(f, bitsv);
    }
  }
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

WavData LoadWav(const std::filesystem::path& path, double expected_fs) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error(name + ": not a RIFF/WAVE file");
  }
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t size = GetU32(chunk + 4);
    const size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw std::runtime_error(name + ": truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      format = GetU16(chunk + 8);
      channels = GetU16(chunk + 10);
      rate = GetU32(chunk + 12);
      bits = GetU16(chunk + 22);
      if (format == 0xFFFE && size >= 26) format = GetU16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || data == nullptr) {
    throw std::runtime_error(name + ": missing fmt or data chunk");
  }
  if (channels != 1) {
    throw std::runtime_error(name + ": expected mono, found " +
                             std::to_string(channels) + " channels");
  }
  if (static_cast<double>(rate) != expected_fs) {
    throw std::runtime_error(
        name + ": sample rate " + std::to_string(rate) + " Hz, expected " +
        std::to_string(static_cast<long>(expected_fs)) + " Hz");
  }
  WavData out;
  out.fs = rate;
  if (format == 1 && bits == 16) {
    out.samples.resize(data_size / 2);
    for (size_t i = 0; i < out.samples.size(); ++i) {
      const int16_t v = static_cast<int16_t>(GetU16(data + 2 * i));
      out.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    out.samples.resize(data_size / 4);
    for (size_t i = 0; i < out.samples.size(); ++i) {
      const uint32_t raw = GetU32(data + 4 * i);
      float v;
      std::memcpy(&v, &raw, 4);
      out.samples[i] = v;
    }
  } else {
    throw std::runtime_error(
        name + ": unsupported encoding (format " + std::to_string(format) +
        ", " + std::to_string(bits) + " bits); expected PCM16 or float32");
  }
  return out;
}

}  // namespace mdaec
