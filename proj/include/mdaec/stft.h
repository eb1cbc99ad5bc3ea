#ifndef MDAEC_STFT_H_
#define MDAEC_STFT_H_

#include <cstdint>
#include <span>
#include <vector>

#include "mdaec/fft.h"

namespace mdaec {

enum class WindowKind { kSqrtHann, kHann, kRectangular };

// Periodic window of length n.
std::vector<double> MakeWindow(WindowKind kind, size_t n);

struct StftConfig {
  size_t window_size = 512;  // N_w, also the FFT size.
  size_t hop_size = 256;     // N_h
  WindowKind window = WindowKind::kSqrtHann;

  size_t fft_size() const { return window_size; }
  size_t num_bins() const { return window_size / 2 + 1; }

  // Throws std::invalid_argument when the hop/window relation is invalid.
  void Validate() const;
};

// Relative deviation of the analysis*synthesis overlap-add sum from its
// mean. Zero for a COLA window pair.
double ColaError(const StftConfig& cfg);

struct SpectralFrame {
  std::vector<Complex> bins;
  int64_t frame_index = 0;
  int channel_id = 0;
};

struct AnalysisResult {
  std::vector<SpectralFrame> frames;
  bool too_short = false;  // Signal shorter than one window.
};

// Frame m is the FFT of the windowed segment starting at m * hop_size.
// floor((len - N_w) / N_h) + 1 frames; trailing samples that do not fill a
// whole window are dropped.
AnalysisResult Analyze(std::span<const double> signal, const StftConfig& cfg,
                       int channel_id = 0);

// Weighted overlap-add. Output length (F - 1) * N_h + N_w. Samples covered
// by fewer than N_w / N_h frames (the first and last N_w - N_h) are not
// reconstructed exactly.
std::vector<double> Synthesize(std::span<const SpectralFrame> frames,
                               const StftConfig& cfg);

}  // namespace mdaec

#endif  // MDAEC_STFT_H_
