#include "mdaec/stft.h"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mdaec {

std::vector<double> MakeWindow(WindowKind kind, size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::kRectangular) return w;
  for (size_t i = 0; i < n; ++i) {
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                             static_cast<double>(n));
    w[i] = kind == WindowKind::kHann ? hann : std::sqrt(hann);
  }
  return w;
}

void StftConfig::Validate() const {
  if (!IsPowerOfTwo(window_size) || window_size < 2) {
    throw std::invalid_argument(
        "STFT window size must be a power of two, got " +
        std::to_string(window_size));
  }
  if (hop_size == 0 || hop_size > window_size || window_size % hop_size != 0) {
    throw std::invalid_argument("STFT hop " + std::to_string(hop_size) +
                                " must divide window " +
                                std::to_string(window_size));
  }
}

namespace {

// Per-sample sum of w^2 over all overlapping frames, for one hop period.
std::vector<double> OverlapSum(const StftConfig& cfg) {
  const std::vector<double> w = MakeWindow(cfg.window, cfg.window_size);
  std::vector<double> sum(cfg.hop_size, 0.0);
  for (size_t i = 0; i < cfg.window_size; ++i) {
    sum[i % cfg.hop_size] += w[i] * w[i];
  }
  return sum;
}

}  // namespace

double ColaError(const StftConfig& cfg) {
  cfg.Validate();
  const std::vector<double> sum = OverlapSum(cfg);
  double mean = 0.0;
  for (double s : sum) mean += s;
  mean /= static_cast<double>(sum.size());
  double worst = 0.0;
  for (double s : sum) worst = std::max(worst, std::abs(s - mean) / mean);
  return worst;
}

AnalysisResult Analyze(std::span<const double> signal, const StftConfig& cfg,
                       int channel_id) {
  cfg.Validate();
  AnalysisResult result;
  const size_t n_w = cfg.window_size;
  const size_t n_h = cfg.hop_size;
  if (signal.size() < n_w) {
    result.too_short = true;
    return result;
  }
  const size_t num_frames = (signal.size() - n_w) / n_h + 1;
  const std::vector<double> w = MakeWindow(cfg.window, n_w);
  const RealFft fft(n_w);
  std::vector<double> segment(n_w);
  result.frames.reserve(num_frames);
  for (size_t m = 0; m < num_frames; ++m) {
    const double* start = signal.data() + m * n_h;
    for (size_t i = 0; i < n_w; ++i) segment[i] = start[i] * w[i];
    SpectralFrame frame;
    frame.bins = fft.Forward(segment);
    frame.frame_index = static_cast<int64_t>(m);
    frame.channel_id = channel_id;
    result.frames.push_back(std::move(frame));
  }
  return result;
}

std::vector<double> Synthesize(std::span<const SpectralFrame> frames,
                               const StftConfig& cfg) {
  cfg.Validate();
  if (frames.empty()) return {};
  const size_t n_w = cfg.window_size;
  const size_t n_h = cfg.hop_size;
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].bins.size() != cfg.num_bins()) {
      throw std::invalid_argument("Synthesize: frame " +
                                  std::to_string(frames[i].frame_index) +
                                  " has wrong bin count");
    }
    if (i > 0 && frames[i].frame_index != frames[i - 1].frame_index + 1) {
      throw std::invalid_argument(
          "Synthesize: missing frame " +
          std::to_string(frames[i - 1].frame_index + 1));
    }
  }
  const std::vector<double> w = MakeWindow(cfg.window, n_w);
  const std::vector<double> norm = OverlapSum(cfg);
  const RealFft fft(n_w);
  std::vector<double> out((frames.size() - 1) * n_h + n_w, 0.0);
  std::vector<double> segment(n_w);
  for (size_t m = 0; m < frames.size(); ++m) {
    fft.Inverse(frames[m].bins, segment);
    double* dst = out.data() + m * n_h;
    for (size_t i = 0; i < n_w; ++i) dst[i] += segment[i] * w[i];
  }
  for (size_t i = 0; i < out.size(); ++i) out[i] /= norm[i % n_h];
  return out;
}

}  // namespace mdaec
