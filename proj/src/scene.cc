#include "mdaec/scene.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mdaec/fft.h"

namespace mdaec {

double Distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::vector<EpcEvent> DefaultEpcSchedule() {
  return {{15.0, PathChange::kDevice2},
          {30.0, PathChange::kMic1},
          {45.0, PathChange::kBoth}};
}

namespace {

Vec3 DrawPosition(std::mt19937_64& rng, const Vec3& room) {
  auto axis = [&](double len) {
    std::uniform_real_distribution<double> d(kWallMargin, len - kWallMargin);
    return d(rng);
  };
  const double x = axis(room.x);
  const double y = axis(room.y);
  const double z = axis(room.z);
  return {x, y, z};
}

Vec3 DrawAwayFrom(std::mt19937_64& rng, const Vec3& room, const Vec3& mic) {
  for (;;) {
    const Vec3 p = DrawPosition(rng, room);
    if (Distance(p, mic) >= kMinSourceMicDistance) return p;
  }
}

bool InsideRoom(const Vec3& p, const Vec3& room) {
  return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x <= room.x && p.y <= room.y &&
         p.z <= room.z;
}

}  // namespace

SceneConfig SampleScene(uint64_t seed) {
  std::mt19937_64 rng(seed);
  SceneConfig cfg;
  std::uniform_real_distribution<double> rx(5.0, 8.0), ry(5.0, 8.0),
      rz(3.0, 6.0), rt(0.2, 0.5);
  cfg.room.x = rx(rng);
  cfg.room.y = ry(rng);
  cfg.room.z = rz(rng);
  cfg.t60 = rt(rng);
  cfg.mic1 = DrawPosition(rng, cfg.room);
  cfg.speaker1 = DrawAwayFrom(rng, cfg.room, cfg.mic1);
  cfg.speaker2 = DrawAwayFrom(rng, cfg.room, cfg.mic1);
  cfg.talker = DrawAwayFrom(rng, cfg.room, cfg.mic1);
  cfg.seed = seed;
  return cfg;
}

double AbsorptionForT60(const Vec3& room, double t60) {
  const double volume = room.x * room.y * room.z;
  const double surface =
      2.0 * (room.x * room.y + room.x * room.z + room.y * room.z);
  const double sabine_area =
      24.0 * std::log(10.0) * volume / (kSpeedOfSound * surface * t60);
  return std::clamp(1.0 - std::exp(-sabine_area), 0.0, 1.0);
}

namespace {

// Hann-windowed sinc sampled finely; linear interpolation between entries.
class FracDelayTable {
 public:
  static constexpr int kOversample = 512;

  FracDelayTable() {
    const int n = 2 * kFracDelayHalfWidth * kOversample + 1;
    table_.resize(n + 1, 0.0);
    for (int i = 0; i < n; ++i) {
      const double t =
          static_cast<double>(i) / kOversample - kFracDelayHalfWidth;
      const double x = std::numbers::pi * t;
      const double sinc =
          (i == kFracDelayHalfWidth * kOversample) ? 1.0 : std::sin(x) / x;
      const double win =
          0.5 + 0.5 * std::cos(std::numbers::pi * t / kFracDelayHalfWidth);
      table_[i] = sinc * win;
    }
  }

  // Kernel value at offset t in (-half_width, half_width).
  double At(double t) const {
    const double pos = (t + kFracDelayHalfWidth) * kOversample;
    const size_t i = static_cast<size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return table_[i] + f * (table_[i + 1] - table_[i]);
  }

 private:
  std::vector<double> table_;
};

const FracDelayTable& DelayTable() {
  static const FracDelayTable table;
  return table;
}

}  // namespace

size_t DirectPathOnset(const Vec3& src, const Vec3& mic, double fs) {
  const double delay = Distance(src, mic) / kSpeedOfSound * fs;
  const double first = std::floor(delay) - (kFracDelayHalfWidth - 1);
  return first <= 0.0 ? 0 : static_cast<size_t>(first);
}

namespace {

// Calls visit(distance, reflections) for every image source whose delay is
// below max_delay samples (Allen and Berkley lattice).
template <typename Visit>
void ForEachImage(const Vec3& room, const Vec3& src, const Vec3& mic, double fs,
                  double max_delay, Visit&& visit) {
  const double samples_per_meter = fs / kSpeedOfSound;
  const double max_dist = max_delay / samples_per_meter;
  const int nx = static_cast<int>(std::ceil(max_dist / (2.0 * room.x))) + 1;
  const int ny = static_cast<int>(std::ceil(max_dist / (2.0 * room.y))) + 1;
  const int nz = static_cast<int>(std::ceil(max_dist / (2.0 * room.z))) + 1;
  for (int mx = -nx; mx <= nx; ++mx) {
    for (int q = 0; q <= 1; ++q) {
      const double rx = (1 - 2 * q) * src.x + 2.0 * mx * room.x - mic.x;
      const int refl_x = std::abs(mx - q) + std::abs(mx);
      for (int my = -ny; my <= ny; ++my) {
        for (int j = 0; j <= 1; ++j) {
          const double ry = (1 - 2 * j) * src.y + 2.0 * my * room.y - mic.y;
          const int refl_y = std::abs(my - j) + std::abs(my);
          for (int mz = -nz; mz <= nz; ++mz) {
            for (int k = 0; k <= 1; ++k) {
              const double rz = (1 - 2 * k) * src.z + 2.0 * mz * room.z - mic.z;
              const double dist = std::sqrt(rx * rx + ry * ry + rz * rz);
              if (dist * samples_per_meter >= max_delay) continue;
              visit(dist, refl_x + refl_y + std::abs(mz - k) + std::abs(mz));
            }
          }
        }
      }
    }
  }
}

// Schroeder decay time of an impulse response: -5 to -35 dB fit,
// extrapolated to -60 dB.
double SchroederDecayTime(const std::vector<double>& h, double fs) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  double n = 0, st = 0, sl = 0, stt = 0, stl = 0;
  for (size_t i = 0; i < edc.size(); ++i) {
    const double level = 10.0 * std::log10(edc[i] / edc[0]);
    if (level > -5.0 || level < -35.0) continue;
    const double t = static_cast<double>(i) / fs;
    n += 1;
    st += t;
    sl += level;
    stt += t * t;
    stl += t * level;
  }
  if (n < 3) return 0.0;
  const double slope = (n * stl - st * sl) / (n * stt - st * st);
  return slope < 0.0 ? -60.0 / slope : std::numeric_limits<double>::infinity();
}

}  // namespace

double CalibratedAbsorption(const Vec3& room, const Vec3& src, const Vec3& mic,
                            double t60, double fs) {
  // Decay rate scales with -ln(1 - absorption); iterate on the measured
  // decay of the synthesized response, starting from the closed form.
  RirOptions opt;
  opt.length = static_cast<size_t>(std::ceil(2.0 * t60 * fs));
  double rate = -std::log(1.0 - AbsorptionForT60(room, t60));
  for (int i = 0; i < 8; ++i) {
    opt.absorption = 1.0 - std::exp(-rate);
    const double measured =
        SchroederDecayTime(ImageSourceRir(room, src, mic, t60, fs, opt), fs);
    if (!(measured > 0.0) || !std::isfinite(measured)) break;
    if (std::abs(measured / t60 - 1.0) < 0.005) break;
    rate = std::min(rate * measured / t60, -std::log(1.0 - 0.999));
  }
  return *opt.absorption;
}

std::vector<double> ImageSourceRir(const Vec3& room, const Vec3& src,
                                   const Vec3& mic, double t60, double fs,
                                   const RirOptions& options) {
  if (!InsideRoom(src, room) || !InsideRoom(mic, room)) {
    throw std::invalid_argument("ImageSourceRir: position outside the room");
  }
  if (!(t60 > 0.0)) throw std::invalid_argument("ImageSourceRir: t60 <= 0");
  if (Distance(src, mic) < 0.01) {
    throw std::invalid_argument(
        "ImageSourceRir: source and microphone closer than 1 cm");
  }
  const size_t len = options.length.value_or(
      static_cast<size_t>(std::ceil(t60 * fs)) + kRirPad);
  const double absorption = options.absorption
                                ? *options.absorption
                                : CalibratedAbsorption(room, src, mic, t60, fs);
  const double beta = std::sqrt(std::max(0.0, 1.0 - absorption));
  std::vector<double> h(len, 0.0);
  const FracDelayTable& table = DelayTable();
  const double samples_per_meter = fs / kSpeedOfSound;
  std::vector<double> beta_pow(1, 1.0);

  ForEachImage(
      room, src, mic, fs, static_cast<double>(len) + kFracDelayHalfWidth,
      [&](double dist, int refl) {
        while (beta_pow.size() <= static_cast<size_t>(refl)) {
          beta_pow.push_back(beta_pow.back() * beta);
        }
        const double gain = beta_pow[refl] / (4.0 * std::numbers::pi * dist);
        if (gain == 0.0) return;
        const double delay = dist * samples_per_meter;
        const int64_t base = static_cast<int64_t>(std::floor(delay));
        const double frac = delay - static_cast<double>(base);
        if (frac == 0.0) {
          if (base < static_cast<int64_t>(len)) h[base] += gain;
          return;
        }
        for (int t = -(kFracDelayHalfWidth - 1); t <= kFracDelayHalfWidth;
             ++t) {
          const int64_t n = base + t;
          if (n < 0 || n >= static_cast<int64_t>(len)) continue;
          h[n] += gain * table.At(static_cast<double>(t) - frac);
        }
      });
  return h;
}

std::vector<double> FftConvolve(std::span<const double> x,
                                std::span<const double> h, size_t out_len) {
  std::vector<double> out(out_len, 0.0);
  if (x.empty() || h.empty()) return out;
  size_t n = 1;
  while (n < 2 * h.size()) n <<= 1;
  n = std::max<size_t>(n, 1024);
  const size_t block = n - h.size() + 1;
  const RealFft fft(n);
  std::vector<double> buf(n, 0.0);
  std::copy(h.begin(), h.end(), buf.begin());
  const std::vector<Complex> hf = fft.Forward(buf);
  std::vector<Complex> spec(fft.num_bins());
  const size_t limit = std::min(x.size(), out_len);
  for (size_t start = 0; start < limit; start += block) {
    const size_t count = std::min(block, x.size() - start);
    std::fill(buf.begin(), buf.end(), 0.0);
    std::copy(x.begin() + start, x.begin() + start + count, buf.begin());
    fft.Forward(buf, spec);
    for (size_t k = 0; k < spec.size(); ++k) spec[k] *= hf[k];
    fft.Inverse(spec, buf);
    const size_t valid = count + h.size() - 1;
    for (size_t i = 0; i < valid && start + i < out_len; ++i) {
      out[start + i] += buf[i];
    }
  }
  return out;
}

std::vector<RirEpoch> ApplyEpc(const SceneConfig& cfg,
                               std::span<const EpcEvent> schedule) {
  std::vector<RirEpoch> epochs;
  // One wall absorption for the room, shared by every path.
  RirOptions walls;
  walls.absorption =
      CalibratedAbsorption(cfg.room, cfg.speaker1, cfg.mic1, cfg.t60, cfg.fs);
  RirEpoch first;
  first.start_s = 0.0;
  first.speaker1 = cfg.speaker1;
  first.speaker2 = cfg.speaker2;
  first.h11 =
      ImageSourceRir(cfg.room, cfg.speaker1, cfg.mic1, cfg.t60, cfg.fs, walls);
  first.h12 =
      ImageSourceRir(cfg.room, cfg.speaker2, cfg.mic1, cfg.t60, cfg.fs, walls);
  first.h_talker =
      ImageSourceRir(cfg.room, cfg.talker, cfg.mic1, cfg.t60, cfg.fs, walls);
  epochs.push_back(std::move(first));
  for (size_t i = 0; i < schedule.size(); ++i) {
    const EpcEvent& ev = schedule[i];
    if (ev.time_s <= epochs.back().start_s) {
      throw std::invalid_argument("ApplyEpc: schedule times must increase");
    }
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull +
                        1000003ull * (i + 1));
    RirEpoch next = epochs.back();
    next.start_s = ev.time_s;
    if (ev.change == PathChange::kMic1 || ev.change == PathChange::kBoth) {
      next.speaker1 = DrawAwayFrom(rng, cfg.room, cfg.mic1);
      next.h11 = ImageSourceRir(cfg.room, next.speaker1, cfg.mic1, cfg.t60,
                                cfg.fs, walls);
    }
    if (ev.change == PathChange::kDevice2 || ev.change == PathChange::kBoth) {
      next.speaker2 = DrawAwayFrom(rng, cfg.room, cfg.mic1);
      next.h12 = ImageSourceRir(cfg.room, next.speaker2, cfg.mic1, cfg.t60,
                                cfg.fs, walls);
    }
    epochs.push_back(std::move(next));
  }
  return epochs;
}

std::vector<double> RenderedScene::TotalEcho() const {
  std::vector<double> d(echo[0].size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = echo[0][i] + echo[1][i];
  return d;
}

namespace {

// Convolves x with a piecewise-constant path, crossfading linearly over
// kEpcCrossfadeS after each switch where the RIR actually changes.
std::vector<double> RenderPath(std::span<const double> x,
                               const std::vector<RirEpoch>& epochs,
                               std::vector<double> RirEpoch::*path, double fs) {
  const size_t n = x.size();
  std::vector<double> out = FftConvolve(x, epochs[0].*path, n);
  const size_t fade = static_cast<size_t>(std::llround(kEpcCrossfadeS * fs));
  for (size_t e = 1; e < epochs.size(); ++e) {
    if (epochs[e].*path == epochs[e - 1].*path) continue;
    const std::vector<double> next = FftConvolve(x, epochs[e].*path, n);
    const size_t start =
        std::min(n, static_cast<size_t>(std::llround(epochs[e].start_s * fs)));
    for (size_t i = start; i < n; ++i) {
      const size_t k = i - start;
      if (k < fade) {
        const double w = static_cast<double>(k) / static_cast<double>(fade);
        out[i] = (1.0 - w) * out[i] + w * next[i];
      } else {
        out[i] = next[i];
      }
    }
  }
  return out;
}

}  // namespace

RenderedScene Render(const SceneConfig& cfg, std::span<const double> x1,
                     std::span<const double> x2, std::span<const double> z) {
  return Render(cfg, x1, x2, z, ApplyEpc(cfg, cfg.epc_schedule));
}

RenderedScene Render(const SceneConfig& cfg, std::span<const double> x1,
                     std::span<const double> x2, std::span<const double> z,
                     const std::vector<RirEpoch>& epochs) {
  const size_t n = x1.size();
  if (x2.size() != n || (!z.empty() && z.size() != n)) {
    throw std::invalid_argument("Render: signal lengths differ");
  }
  if (epochs.empty()) throw std::invalid_argument("Render: no RIR epochs");
  for (const EpcEvent& ev : cfg.epc_schedule) {
    if (ev.time_s < 0.0 || ev.time_s * cfg.fs >= static_cast<double>(n)) {
      throw std::invalid_argument("Render: echo-path change outside signal");
    }
  }
  RenderedScene scene;
  scene.fs = cfg.fs;
  scene.epochs = epochs;
  scene.far_end[0].assign(x1.begin(), x1.end());
  scene.far_end[1].assign(x2.begin(), x2.end());
  scene.echo[0] = RenderPath(x1, epochs, &RirEpoch::h11, cfg.fs);
  const std::vector<double> echo2_sync =
      RenderPath(x2, epochs, &RirEpoch::h12, cfg.fs);
  SimulateSroOptions opt;
  opt.output_len = n;
  scene.echo[1] = SimulateSro(echo2_sync, cfg.sro, opt);
  scene.near_end = z.empty()
                       ? std::vector<double>(n, 0.0)
                       : RenderPath(z, epochs, &RirEpoch::h_talker, cfg.fs);

  double signal_power = 0.0;
  std::vector<double> clean(n);
  for (size_t i = 0; i < n; ++i) {
    clean[i] = scene.echo[0][i] + scene.echo[1][i] + scene.near_end[i];
    signal_power += clean[i] * clean[i];
  }
  signal_power /= static_cast<double>(std::max<size_t>(n, 1));

  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66Dull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  scene.noise.resize(n);
  double noise_power = 0.0;
  for (double& v : scene.noise) {
    v = gauss(rng);
    noise_power += v * v;
  }
  noise_power /= static_cast<double>(std::max<size_t>(n, 1));
  const double target = signal_power * std::pow(10.0, -cfg.snr_db / 10.0);
  const double gain = noise_power > 0.0 ? std::sqrt(target / noise_power) : 0.0;
  scene.mic.resize(n);
  for (size_t i = 0; i < n; ++i) {
    scene.noise[i] *= gain;
    scene.mic[i] = clean[i] + scene.noise[i];
  }
  return scene;
}

std::string ToString(PlaybackMode mode) {
  return mode == PlaybackMode::kCorrelated ? "correlated" : "uncorrelated";
}

std::string ToString(PathChange change) {
  switch (change) {
    case PathChange::kDevice2: return "device2_pos";
    case PathChange::kMic1: return "mic1_pos";
    case PathChange::kBoth: return "both";
  }
  return "both";
}

PlaybackMode ParsePlaybackMode(const std::string& s) {
  if (s == "correlated") return PlaybackMode::kCorrelated;
  if (s == "uncorrelated") return PlaybackMode::kUncorrelated;
  throw std::invalid_argument("unknown playback mode '" + s + "'");
}

PathChange ParsePathChange(const std::string& s) {
  if (s == "device2_pos") return PathChange::kDevice2;
  if (s == "mic1_pos") return PathChange::kMic1;
  if (s == "both") return PathChange::kBoth;
  throw std::invalid_argument("unknown path change '" + s + "'");
}

}  // namespace mdaec
