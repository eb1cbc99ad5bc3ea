#include "mdaec/kalman.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mdaec {

void KalmanConfig::Validate() const {
  if (num_channels < 1) throw std::invalid_argument("Kalman: no channels");
  if (partitions < 1) throw std::invalid_argument("Kalman: no partitions");
  if (!IsPowerOfTwo(fft_size) || hop * 2 != fft_size) {
    throw std::invalid_argument("Kalman: hop must be half the FFT size");
  }
  if (!(transition > 0.0 && transition <= 1.0)) {
    throw std::invalid_argument("Kalman: transition factor must be in (0, 1]");
  }
  if (!(obs_noise_smoothing >= 0.0 && obs_noise_smoothing <= 1.0)) {
    throw std::invalid_argument("Kalman: observation smoothing in [0, 1]");
  }
}

KalmanState KalmanState::Initial(const KalmanConfig& cfg) {
  const size_t k = cfg.num_bins();
  KalmanState s;
  s.filter.assign(cfg.num_channels,
                  std::vector<std::vector<Complex>>(
                      cfg.partitions, std::vector<Complex>(k, Complex(0, 0))));
  s.covariance.assign(
      cfg.num_channels,
      std::vector<std::vector<double>>(
          cfg.partitions,
          std::vector<double>(k, cfg.initial_coefficient_variance)));
  s.ref_history = s.filter;
  s.obs_noise.assign(k, cfg.initial_obs_noise);
  s.process_noise.assign(
      cfg.num_channels,
      std::vector<std::vector<double>>(
          cfg.partitions, std::vector<double>(k, cfg.process_noise_floor)));
  return s;
}

void UpdateObservationNoise(KalmanState& state, const SpectralFrame& error,
                            const KalmanConfig& cfg) {
  const double lambda = cfg.obs_noise_smoothing;
  for (size_t k = 0; k < state.obs_noise.size(); ++k) {
    state.obs_noise[k] =
        lambda * state.obs_noise[k] + (1.0 - lambda) * std::norm(error.bins[k]);
  }
}

void UpdateProcessNoise(KalmanState& state, const KalmanConfig& cfg) {
  const double a = cfg.transition;
  const double scale = cfg.process_noise_scale * (1.0 - a * a);
  for (size_t q = 0; q < state.filter.size(); ++q) {
    for (size_t b = 0; b < state.filter[q].size(); ++b) {
      const auto& h = state.filter[q][b];
      auto& psi = state.process_noise[q][b];
      for (size_t k = 0; k < h.size(); ++k) {
        psi[k] = scale * std::norm(h[k]) + cfg.process_noise_floor;
      }
    }
  }
}

PartitionedKalmanFilter::PartitionedKalmanFilter(const KalmanConfig& cfg)
    : cfg_(cfg), fft_(cfg.fft_size) {
  cfg_.Validate();
  state_ = KalmanState::Initial(cfg_);
}

SpectralFrame PartitionedKalmanFilter::ReferenceFrame(
    std::span<const double> block, int64_t frame_index, int channel) const {
  if (block.size() != cfg_.fft_size) {
    throw std::invalid_argument("Kalman: reference block must hold V samples");
  }
  return SpectralFrame{fft_.Forward(block), frame_index, channel};
}

SpectralFrame PartitionedKalmanFilter::MicFrame(std::span<const double> hop,
                                                int64_t frame_index) const {
  if (hop.size() != cfg_.hop) {
    throw std::invalid_argument("Kalman: microphone block must hold M samples");
  }
  std::vector<double> padded(cfg_.fft_size, 0.0);
  std::copy(hop.begin(), hop.end(),
            padded.begin() + (cfg_.fft_size - cfg_.hop));
  return SpectralFrame{fft_.Forward(padded), frame_index, -1};
}

void PartitionedKalmanFilter::Constrain(std::vector<Complex>& bins,
                                        std::vector<double>& scratch) const {
  fft_.Inverse(bins, scratch);
  std::fill(scratch.begin() + cfg_.hop, scratch.end(), 0.0);
  fft_.Forward(scratch, bins);
}

namespace {

bool AllFinite(std::span<const Complex> bins) {
  for (const Complex& c : bins) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
  }
  return true;
}

}  // namespace

KalmanFrameOutput PartitionedKalmanFilter::ProcessFrame(
    const SpectralFrame& mic, std::span<const SpectralFrame> refs) {
  const size_t num_bins = cfg_.num_bins();
  const size_t num_ch = cfg_.num_channels;
  const size_t num_part = cfg_.partitions;
  if (refs.size() != num_ch) {
    throw std::invalid_argument("Kalman: expected " + std::to_string(num_ch) +
                                " reference frames, got " +
                                std::to_string(refs.size()));
  }
  if (mic.bins.size() != num_bins || !AllFinite(mic.bins)) {
    throw std::invalid_argument("Kalman: invalid microphone frame " +
                                std::to_string(mic.frame_index));
  }
  for (const SpectralFrame& r : refs) {
    if (r.bins.size() != num_bins || !AllFinite(r.bins)) {
      throw std::invalid_argument("Kalman: invalid reference frame " +
                                  std::to_string(r.frame_index));
    }
  }

  KalmanState& s = state_;
  for (size_t q = 0; q < num_ch; ++q) {
    auto& hist = s.ref_history[q];
    for (size_t b = num_part - 1; b > 0; --b) hist[b].swap(hist[b - 1]);
    hist[0] = refs[q].bins;
  }

  // Echo prediction. Channel partial sums are added last so that swapping
  // two channels gives bit-identical results.
  std::vector<double> scratch(cfg_.fft_size);
  std::vector<Complex> prediction(num_bins, Complex(0, 0));
  std::vector<std::vector<Complex>> channel_sum(
      num_ch, std::vector<Complex>(num_bins, Complex(0, 0)));
  for (size_t q = 0; q < num_ch; ++q) {
    for (size_t b = 0; b < num_part; ++b) {
      const auto& h = s.filter[q][b];
      const auto& x = s.ref_history[q][b];
      for (size_t k = 0; k < num_bins; ++k) channel_sum[q][k] += h[k] * x[k];
    }
  }
  for (size_t q = 0; q < num_ch; ++q) {
    for (size_t k = 0; k < num_bins; ++k) prediction[k] += channel_sum[q][k];
  }
  fft_.Inverse(prediction, scratch);
  KalmanFrameOutput out;
  out.echo_time.assign(scratch.begin() + (cfg_.fft_size - cfg_.hop),
                       scratch.end());
  std::fill(scratch.begin(), scratch.begin() + (cfg_.fft_size - cfg_.hop), 0.0);
  out.echo_estimate = SpectralFrame{fft_.Forward(scratch), mic.frame_index, -1};

  out.error =
      SpectralFrame{std::vector<Complex>(num_bins), mic.frame_index, -1};
  for (size_t k = 0; k < num_bins; ++k) {
    out.error.bins[k] = mic.bins[k] - out.echo_estimate.bins[k];
  }
  fft_.Inverse(out.error.bins, scratch);
  out.error_time.assign(scratch.begin() + (cfg_.fft_size - cfg_.hop),
                        scratch.end());

  UpdateObservationNoise(s, out.error, cfg_);

  // Shared denominator of the gain, summed over channels and partitions.
  const double obs_weight =
      static_cast<double>(cfg_.hop) / static_cast<double>(cfg_.fft_size);
  std::vector<std::vector<double>> channel_power(
      num_ch, std::vector<double>(num_bins, 0.0));
  for (size_t q = 0; q < num_ch; ++q) {
    for (size_t b = 0; b < num_part; ++b) {
      const auto& p = s.covariance[q][b];
      const auto& x = s.ref_history[q][b];
      for (size_t k = 0; k < num_bins; ++k) {
        channel_power[q][k] += p[k] * std::norm(x[k]);
      }
    }
  }
  std::vector<double> denom(num_bins, 0.0);
  for (size_t q = 0; q < num_ch; ++q) {
    for (size_t k = 0; k < num_bins; ++k) denom[k] += channel_power[q][k];
  }
  for (size_t k = 0; k < num_bins; ++k) {
    denom[k] =
        std::max(denom[k] + obs_weight * s.obs_noise[k], cfg_.gain_floor);
  }

  const double a = cfg_.transition;
  std::vector<Complex> step(num_bins);
  for (size_t q = 0; q < num_ch; ++q) {
    for (size_t b = 0; b < num_part; ++b) {
      auto& h = s.filter[q][b];
      auto& p = s.covariance[q][b];
      const auto& x = s.ref_history[q][b];
      const auto& psi = s.process_noise[q][b];
      for (size_t k = 0; k < num_bins; ++k) {
        const Complex gain = p[k] * std::conj(x[k]) / denom[k];
        step[k] = gain * out.error.bins[k];
        // 1 - K X is real and positive since denom > P |X|^2.
        const double keep = 1.0 - p[k] * std::norm(x[k]) / denom[k];
        p[k] = a * a * keep * p[k] + psi[k];
      }
      Constrain(step, scratch);
      for (size_t k = 0; k < num_bins; ++k) h[k] = a * (h[k] + step[k]);
    }
  }

  UpdateProcessNoise(s, cfg_);
  ++frames_processed_;
  return out;
}

std::vector<double> PartitionedKalmanFilter::ImpulseResponse(
    size_t channel) const {
  std::vector<double> h(cfg_.filter_length(), 0.0);
  std::vector<double> scratch(cfg_.fft_size);
  for (size_t b = 0; b < cfg_.partitions; ++b) {
    fft_.Inverse(state_.filter[channel][b], scratch);
    std::copy(scratch.begin(), scratch.begin() + cfg_.hop,
              h.begin() + b * cfg_.hop);
  }
  return h;
}

}  // namespace mdaec
