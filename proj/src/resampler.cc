#include "mdaec/resampler.h"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mdaec {

SroPpm::SroPpm(double ppm) : ppm_(ppm) {
  if (!std::isfinite(ppm) || std::abs(ppm) > kMaxAbsPpm) {
    throw std::invalid_argument("SRO of " + std::to_string(ppm) +
                                " ppm outside +-1000 ppm");
  }
}

int AdvanceDrift(DriftState& drift, double sro, size_t hop) {
  drift.accumulated_shift += sro * static_cast<double>(hop);
  ++drift.frames_processed;
  const double residual = drift.residual();
  if (residual >= 0.5) {
    ++drift.integer_shift_applied;
    return 1;
  }
  if (residual <= -0.5) {
    --drift.integer_shift_applied;
    return -1;
  }
  return 0;
}

void ApplyFractionalDelay(std::span<Complex> bins, double delay,
                          size_t fft_size) {
  if (delay == 0.0) return;
  const double step =
      -2.0 * std::numbers::pi * delay / static_cast<double>(fft_size);
  for (size_t k = 0; k < bins.size(); ++k) {
    bins[k] *= std::polar(1.0, step * static_cast<double>(k));
  }
  // The Nyquist bin of a real signal must stay real.
  if (bins.size() == fft_size / 2 + 1) {
    bins.back() = Complex(bins.back().real(), 0.0);
  }
}

std::vector<double> SimulateSro(std::span<const double> signal, SroPpm sro,
                                const SimulateSroOptions& options) {
  const size_t seg = options.segment_len;
  const size_t keep = options.keep;
  if (!IsPowerOfTwo(seg)) {
    throw std::invalid_argument("SimulateSro: segment length " +
                                std::to_string(seg) + " is not a power of two");
  }
  if (keep == 0 || keep > seg / 2) {
    throw std::invalid_argument("SimulateSro: keep must be in [1, seg/2]");
  }
  if (signal.size() < seg) {
    throw std::invalid_argument("SimulateSro: signal shorter than one segment");
  }
  const double eps = sro.ratio();
  if (std::abs(eps) * static_cast<double>(seg) >
      0.25 * static_cast<double>(seg)) {
    throw std::invalid_argument(
        "SimulateSro: drift per segment exceeds a quarter segment");
  }
  const size_t out_len = options.output_len.value_or(static_cast<size_t>(
      std::llround(static_cast<double>(signal.size()) * (1.0 + eps))));
  std::vector<double> out(out_len, 0.0);
  if (eps == 0.0) {
    for (size_t i = 0; i < out_len && i < signal.size(); ++i)
      out[i] = signal[i];
    return out;
  }

  const RealFft fft(seg);
  std::vector<double> buffer(seg);
  std::vector<Complex> spectrum(fft.num_bins());
  const int64_t n_in = static_cast<int64_t>(signal.size());
  const int64_t half = static_cast<int64_t>(seg / 2);
  const int64_t keep_i = static_cast<int64_t>(keep);
  for (int64_t block = 0; block < static_cast<int64_t>(out_len);
       block += keep_i) {
    // Delay of out[n] relative to x: n - n / (1 + eps), taken at the block
    // center and split into integer and fractional parts.
    const double center =
        static_cast<double>(block) + 0.5 * static_cast<double>(keep_i - 1);
    const double delay = center - center / (1.0 + eps);
    const double integer = std::round(delay);
    const double frac = delay - integer;
    // The kept block sits in the middle of the segment.
    const int64_t seg_start =
        block - half + keep_i / 2 - static_cast<int64_t>(integer);
    for (int64_t i = 0; i < static_cast<int64_t>(seg); ++i) {
      const int64_t src = seg_start + i;
      buffer[i] = (src >= 0 && src < n_in) ? signal[src] : 0.0;
    }
    fft.Forward(buffer, spectrum);
    ApplyFractionalDelay(spectrum, frac, seg);
    fft.Inverse(spectrum, buffer);
    const int64_t offset = half - keep_i / 2;
    for (int64_t i = 0; i < keep_i && block + i < static_cast<int64_t>(out_len);
         ++i) {
      out[block + i] = buffer[offset + i];
    }
  }
  return out;
}

namespace {

double BesselI0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = 0.25 * x * x;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

}  // namespace

std::vector<double> SincResampleOracle(std::span<const double> signal,
                                       double ratio,
                                       std::optional<size_t> output_len) {
  if (!(ratio > 0.9 && ratio < 1.1)) {
    throw std::invalid_argument("SincResampleOracle: ratio " +
                                std::to_string(ratio) + " outside (0.9, 1.1)");
  }
  constexpr int kHalfTaps = 32;
  constexpr double kBeta = 12.0;
  const double cutoff = std::min(1.0, ratio);
  const double i0_beta = BesselI0(kBeta);
  const size_t out_len = output_len.value_or(static_cast<size_t>(
      std::llround(static_cast<double>(signal.size()) * ratio)));
  const int64_t n_in = static_cast<int64_t>(signal.size());
  std::vector<double> out(out_len, 0.0);
  double taps[2 * kHalfTaps];
  for (size_t n = 0; n < out_len; ++n) {
    const double pos = static_cast<double>(n) / ratio;
    const int64_t base = static_cast<int64_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(base);
    if (frac == 0.0 && cutoff == 1.0) {
      out[n] = (base >= 0 && base < n_in) ? signal[base] : 0.0;
      continue;
    }
    double tap_sum = 0.0;
    for (int j = 0; j < 2 * kHalfTaps; ++j) {
      const int offset = j - kHalfTaps + 1;  // -31 .. 32
      const double t = static_cast<double>(offset) - frac;
      const double x = std::numbers::pi * cutoff * t;
      const double sinc = (t == 0.0) ? 1.0 : std::sin(x) / x;
      const double r = t / (static_cast<double>(kHalfTaps) + 1.0);
      const double win =
          std::abs(r) >= 1.0
              ? 0.0
              : BesselI0(kBeta * std::sqrt(1.0 - r * r)) / i0_beta;
      taps[j] = cutoff * sinc * win;
      tap_sum += taps[j];
    }
    double acc = 0.0;
    for (int j = 0; j < 2 * kHalfTaps; ++j) {
      const int64_t src = base + j - kHalfTaps + 1;
      if (src >= 0 && src < n_in) acc += signal[src] * taps[j];
    }
    // Unit DC gain regardless of the fractional position.
    out[n] = acc / tap_sum;
  }
  return out;
}

CompensationResult CompensateReference(const SpectralFrame& frame,
                                       SroPpm sro_hat, const DriftState& drift,
                                       const StftConfig& cfg) {
  CompensationResult result{frame, drift, 0};
  ApplyFractionalDelay(result.frame.bins, drift.residual(), cfg.fft_size());
  result.shift_delta =
      AdvanceDrift(result.drift, sro_hat.ratio(), cfg.hop_size);
  return result;
}

}  // namespace mdaec
