#ifndef MDAEC_RESAMPLER_H_
#define MDAEC_RESAMPLER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mdaec/stft.h"

namespace mdaec {

// Relative sampling-rate offset between two clocks, stored in ppm.
// Positive values mean the rendered stream is stretched: a tone at f comes
// out at f / (1 + eps), and the delay between the streams grows by eps
// samples per sample.
class SroPpm {
 public:
  static constexpr double kMaxAbsPpm = 1000.0;

  constexpr SroPpm() = default;
  // Throws std::invalid_argument outside +-kMaxAbsPpm or when not finite.
  explicit SroPpm(double ppm);

  double ppm() const { return ppm_; }
  double ratio() const { return ppm_ * 1e-6; }

  friend bool operator==(SroPpm a, SroPpm b) = default;

 private:
  double ppm_ = 0.0;
};

// Drift bookkeeping for a compensated reference stream. The integer part of
// the accumulated delay is realized by moving the time-domain read pointer,
// the remaining fraction by a per-bin phase rotation.
struct DriftState {
  double accumulated_shift = 0.0;     // samples
  int64_t integer_shift_applied = 0;  // samples
  int64_t frames_processed = 0;

  double residual() const {
    return accumulated_shift - static_cast<double>(integer_shift_applied);
  }
};

// Advances `drift` by sro * hop samples and moves the integer shift by one
// sample whenever the residual reaches half a sample. Returns the change of
// the integer shift (-1, 0 or +1).
int AdvanceDrift(DriftState& drift, double sro, size_t hop);

struct SimulateSroOptions {
  size_t segment_len = 8192;
  // Output samples produced per segment. The delay is held constant over
  // this many samples, so it bounds the in-segment delay error at
  // |eps| * keep / 2.
  size_t keep = 128;
  // Defaults to round(len * (1 + eps)).
  std::optional<size_t> output_len;
};

// Renders `signal` as if it had been captured by a clock running at
// (1 + eps) times the nominal rate: out[n] = x[n / (1 + eps)]. Each output
// block is produced from a segment_len FFT of the input around the block,
// rotated by the fractional part of the block-center delay; the integer part
// moves the segment start.
std::vector<double> SimulateSro(std::span<const double> signal, SroPpm sro,
                                const SimulateSroOptions& options = {});

// Kaiser-windowed sinc interpolation (64 taps, beta = 12):
// out[n] = x[n / ratio]. Validation reference for SimulateSro.
std::vector<double> SincResampleOracle(std::span<const double> signal,
                                       double ratio,
                                       std::optional<size_t> output_len = {});

struct CompensationResult {
  SpectralFrame frame;
  DriftState drift;
  int shift_delta = 0;  // Read-pointer move to apply before the next frame.
};

// Multiplies the frame by exp(-j 2 pi k d / N_w), d being the residual
// fractional delay of `drift`, then advances the drift by sro_hat * N_h.
// The frame must have been taken from the reference stream delayed by
// drift.integer_shift_applied samples.
CompensationResult CompensateReference(const SpectralFrame& frame,
                                       SroPpm sro_hat, const DriftState& drift,
                                       const StftConfig& cfg);

// In-place variant of the phase rotation used above.
void ApplyFractionalDelay(std::span<Complex> bins, double delay,
                          size_t fft_size);

}  // namespace mdaec

#endif  // MDAEC_RESAMPLER_H_
