#ifndef MDAEC_KALMAN_H_
#define MDAEC_KALMAN_H_

#include <span>
#include <vector>

#include "mdaec/fft.h"
#include "mdaec/stft.h"

namespace mdaec {

struct KalmanConfig {
  size_t num_channels = 2;
  size_t partitions = 10;     // B
  size_t fft_size = 512;      // V
  size_t hop = 256;           // M
  double transition = 0.999;  // A
  // Scales the (1 - A^2) |H|^2 process-noise term.
  double process_noise_scale = 1.0;
  double process_noise_floor = 1e-10;  // delta
  double obs_noise_smoothing = 0.9;    // lambda
  double initial_coefficient_variance = 1e-2;
  double initial_obs_noise = 1e-4;
  double gain_floor = 1e-10;

  size_t num_bins() const { return fft_size / 2 + 1; }
  size_t filter_length() const { return partitions * hop; }

  void Validate() const;
};

// Per-bin (diagonal) state of a partitioned-block frequency-domain Kalman
// filter. Outer index is the far-end channel, inner the partition.
struct KalmanState {
  std::vector<std::vector<std::vector<Complex>>> filter;       // H_hat
  std::vector<std::vector<std::vector<double>>> covariance;    // P
  std::vector<std::vector<std::vector<Complex>>> ref_history;  // X^b = X(m-b)
  std::vector<double> obs_noise;                               // Psi_ZZ
  std::vector<std::vector<std::vector<double>>>
      process_noise;  // Psi_DeltaDelta

  static KalmanState Initial(const KalmanConfig& cfg);
};

struct KalmanFrameOutput {
  SpectralFrame echo_estimate;     // FFT of [0 (V-M), d_hat (M)]
  SpectralFrame error;             // FFT of [0 (V-M), e (M)]
  std::vector<double> error_time;  // e, M samples
  std::vector<double> echo_time;   // d_hat, M samples
};

// Psi_ZZ <- lambda Psi_ZZ + (1 - lambda) |E|^2.
void UpdateObservationNoise(KalmanState& state, const SpectralFrame& error,
                            const KalmanConfig& cfg);

// Psi_DeltaDelta <- scale (1 - A^2) |H|^2 + delta.
void UpdateProcessNoise(KalmanState& state, const KalmanConfig& cfg);

// Echo canceller for one microphone and num_channels far-end references.
// Each frame consumes M new microphone samples and, per channel, the
// spectrum of the last V reference samples (ending with the M new ones).
class PartitionedKalmanFilter {
 public:
  explicit PartitionedKalmanFilter(const KalmanConfig& cfg);

  // Throws std::invalid_argument on non-finite input or mismatched sizes;
  // the state is not modified in that case.
  KalmanFrameOutput ProcessFrame(const SpectralFrame& mic,
                                 std::span<const SpectralFrame> refs);

  // Spectrum of the last V reference samples, unwindowed.
  SpectralFrame ReferenceFrame(std::span<const double> block,
                               int64_t frame_index, int channel) const;
  // Spectrum of M microphone samples preceded by V - M zeros.
  SpectralFrame MicFrame(std::span<const double> hop,
                         int64_t frame_index) const;

  // Time-domain filter for one channel, B * M taps.
  std::vector<double> ImpulseResponse(size_t channel) const;

  const KalmanState& state() const { return state_; }
  const KalmanConfig& config() const { return cfg_; }
  int64_t frames_processed() const { return frames_processed_; }

 private:
  // Keeps only the first M taps of a partition update.
  void Constrain(std::vector<Complex>& bins,
                 std::vector<double>& scratch) const;

  KalmanConfig cfg_;
  RealFft fft_;
  KalmanState state_;
  int64_t frames_processed_ = 0;
};

}  // namespace mdaec

#endif  // MDAEC_KALMAN_H_
