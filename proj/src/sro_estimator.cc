#include "mdaec/sro_estimator.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mdaec {

void DwacdConfig::Validate() const {
  if (!IsPowerOfTwo(segment_len)) {
    throw std::invalid_argument("DWACD segment length must be a power of two");
  }
  if (welch_hop == 0 || segment_len % welch_hop != 0 ||
      subframe_len() > segment_len || !IsPowerOfTwo(subframe_len())) {
    throw std::invalid_argument("DWACD welch hop must divide the segment");
  }
  if (!(smoothing > 0.0 && smoothing < 1.0)) {
    throw std::invalid_argument("DWACD smoothing must lie in (0, 1)");
  }
  if (snapshot_distance() != segment_len) {
    throw std::invalid_argument(
        "DWACD temporal distance times welch hop must equal the segment "
        "length");
  }
  if (snapshot_distance() % update_interval() != 0) {
    throw std::invalid_argument(
        "DWACD snapshot distance must be a multiple of the update interval");
  }
  if (!(fs > 0.0)) throw std::invalid_argument("DWACD fs must be positive");
}

std::vector<Complex> Coherence(std::span<const double> input,
                               std::span<const double> ref,
                               const DwacdConfig& cfg) {
  if (input.size() != ref.size() || input.size() < cfg.subframe_len()) {
    throw std::invalid_argument(
        "Coherence: blocks must match and hold a "
        "sub-frame");
  }
  const size_t n = cfg.subframe_len();
  const size_t bins = n / 2 + 1;
  const RealFft fft(n);
  const std::vector<double> w = MakeWindow(cfg.welch_window, n);
  std::vector<double> cross_re(bins, 0.0), cross_im(bins, 0.0);
  std::vector<double> auto_in(bins, 0.0), auto_ref(bins, 0.0);
  std::vector<double> seg_in(n), seg_ref(n);
  std::vector<Complex> spec_in(bins), spec_ref(bins);
  for (size_t start = 0; start + n <= input.size(); start += cfg.welch_hop) {
    for (size_t i = 0; i < n; ++i) {
      seg_in[i] = input[start + i] * w[i];
      seg_ref[i] = ref[start + i] * w[i];
    }
    fft.Forward(seg_in, spec_in);
    fft.Forward(seg_ref, spec_ref);
    for (size_t k = 0; k < bins; ++k) {
      const Complex c = spec_in[k] * std::conj(spec_ref[k]);
      cross_re[k] += c.real();
      cross_im[k] += c.imag();
      auto_in[k] += std::norm(spec_in[k]);
      auto_ref[k] += std::norm(spec_ref[k]);
    }
  }
  double mean_in = 0.0, mean_ref = 0.0;
  for (size_t k = 0; k < bins; ++k) {
    mean_in += auto_in[k];
    mean_ref += auto_ref[k];
  }
  mean_in /= static_cast<double>(bins);
  mean_ref /= static_cast<double>(bins);
  const double floor = 1e-12 * mean_in * mean_ref;
  std::vector<Complex> gamma(bins, Complex(0.0, 0.0));
  for (size_t k = 0; k < bins; ++k) {
    const double denom = auto_in[k] * auto_ref[k];
    if (denom < floor || denom <= 0.0) continue;
    gamma[k] = Complex(cross_re[k], cross_im[k]) / std::sqrt(denom);
  }
  return gamma;
}

double GccAt(std::span<const Complex> phase, double lag) {
  const size_t bins = phase.size();
  const double n = 2.0 * static_cast<double>(bins - 1);
  double acc = phase[0].real();
  const double step = 2.0 * std::numbers::pi * lag / n;
  for (size_t k = 1; k + 1 < bins; ++k) {
    acc += 2.0 *
           (phase[k] * std::polar(1.0, step * static_cast<double>(k))).real();
  }
  acc +=
      (phase[bins - 1] * std::polar(1.0, step * static_cast<double>(bins - 1)))
          .real();
  return acc;
}

int GccIntegerPeak(std::span<const Complex> phase, int max_lag) {
  const size_t n = 2 * (phase.size() - 1);
  const RealFft fft(n);
  const std::vector<double> gcc = fft.Inverse(phase);
  max_lag = std::min<int>(max_lag, static_cast<int>(n / 2) - 1);
  int best = 0;
  double best_value = -1.0;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    const size_t idx =
        lag >= 0 ? static_cast<size_t>(lag) : n - static_cast<size_t>(-lag);
    const double v = std::abs(gcc[idx]);
    if (v > best_value) {
      best_value = v;
      best = lag;
    }
  }
  return best;
}

double GoldenSectionPeak(std::span<const Complex> phase, int beta_max) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = beta_max - 0.5;
  double hi = beta_max + 0.5;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = std::abs(GccAt(phase, x1));
  double f2 = std::abs(GccAt(phase, x2));
  while (hi - lo >= 1e-3) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = std::abs(GccAt(phase, x2));
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = std::abs(GccAt(phase, x1));
    }
  }
  return 0.5 * (lo + hi);
}

double RmsDbfs(std::span<const double> block) {
  if (block.empty()) return -std::numeric_limits<double>::infinity();
  double energy = 0.0;
  for (double v : block) energy += v * v;
  const double ms = energy / static_cast<double>(block.size());
  return ms > 0.0 ? 10.0 * std::log10(ms)
                  : -std::numeric_limits<double>::infinity();
}

bool EnergyVad(std::span<const double> block, double threshold_dbfs) {
  return RmsDbfs(block) > threshold_dbfs;
}

SroEstimator::SroEstimator(const DwacdConfig& cfg)
    : cfg_(cfg),
      ring_capacity_(4 * cfg.segment_len),
      input_ring_(ring_capacity_, 0.0),
      ref_ring_(ring_capacity_, 0.0),
      active_ring_(ring_capacity_, 0),
      next_cadence_at_(static_cast<int64_t>(cfg.segment_len)),
      averaged_phase_(cfg.num_bins(), Complex(0.0, 0.0)) {
  cfg_.Validate();
}

std::optional<SroPpm> SroEstimator::Update(std::span<const double> input,
                                           std::span<const double> ref,
                                           bool vad_input, bool vad_ref) {
  if (input.size() != ref.size()) {
    throw std::invalid_argument("SroEstimator::Update: block size mismatch");
  }
  for (size_t i = 0; i < input.size(); ++i) {
    if (!std::isfinite(input[i]) || !std::isfinite(ref[i])) {
      throw std::invalid_argument(
          "SroEstimator::Update: non-finite sample at offset " +
          std::to_string(i) + " after " + std::to_string(samples_seen_) +
          " samples");
    }
  }
  const uint8_t active = (vad_input && vad_ref) ? 1 : 0;
  std::optional<SroPpm> produced;
  size_t pos = 0;
  while (pos < input.size()) {
    const size_t until_cadence =
        static_cast<size_t>(next_cadence_at_ - samples_seen_);
    const size_t chunk = std::min(until_cadence, input.size() - pos);
    for (size_t i = 0; i < chunk; ++i) {
      const size_t slot =
          static_cast<size_t>(samples_seen_ + static_cast<int64_t>(i)) %
          ring_capacity_;
      input_ring_[slot] = input[pos + i];
      ref_ring_[slot] = ref[pos + i];
      active_ring_[slot] = active;
    }
    samples_seen_ += static_cast<int64_t>(chunk);
    pos += chunk;
    AdvanceAlignment(chunk);
    if (samples_seen_ == next_cadence_at_) {
      if (auto e = RunCadence()) produced = e;
      next_cadence_at_ += static_cast<int64_t>(cfg_.update_interval());
    }
  }
  return produced;
}

void SroEstimator::AdvanceAlignment(size_t num_samples) {
  drift_.accumulated_shift +=
      epsilon_hat_.ratio() * static_cast<double>(num_samples);
  ++drift_.frames_processed;
  while (drift_.residual() >= 0.5) ++drift_.integer_shift_applied;
  while (drift_.residual() <= -0.5) --drift_.integer_shift_applied;
  // The leading signal is held back by the whole accumulated shift, so the
  // history has to outgrow it.
  const size_t needed =
      static_cast<size_t>(std::abs(drift_.integer_shift_applied)) +
      2 * cfg_.segment_len;
  if (needed > ring_capacity_) GrowRings(2 * needed);
}

void SroEstimator::GrowRings(size_t capacity) {
  std::vector<double> input(capacity, 0.0), ref(capacity, 0.0);
  std::vector<uint8_t> active(capacity, 0);
  const int64_t first = std::max<int64_t>(
      0, samples_seen_ - static_cast<int64_t>(ring_capacity_));
  for (int64_t i = first; i < samples_seen_; ++i) {
    const size_t from = static_cast<size_t>(i) % ring_capacity_;
    const size_t to = static_cast<size_t>(i) % capacity;
    input[to] = input_ring_[from];
    ref[to] = ref_ring_[from];
    active[to] = active_ring_[from];
  }
  input_ring_.swap(input);
  ref_ring_.swap(ref);
  active_ring_.swap(active);
  ring_capacity_ = capacity;
}

void SroEstimator::ReadRing(const std::vector<double>& ring, int64_t delay,
                            std::span<double> out) const {
  const int64_t len = static_cast<int64_t>(out.size());
  const int64_t first = samples_seen_ - delay - len;
  for (int64_t i = 0; i < len; ++i) {
    const int64_t abs_idx = first + i;
    out[static_cast<size_t>(i)] =
        abs_idx < 0 ? 0.0 : ring[static_cast<size_t>(abs_idx) % ring_capacity_];
  }
}

std::optional<SroPpm> SroEstimator::RunCadence() {
  const int64_t cadence = cadence_index_++;
  const int64_t lag_cadences =
      static_cast<int64_t>(cfg_.snapshot_distance() / cfg_.update_interval());
  while (!snapshots_.empty() &&
         snapshots_.front().cadence_index < cadence - lag_cadences) {
    snapshots_.pop_front();
  }

  const size_t seg = cfg_.segment_len;
  size_t active_count = 0;
  for (int64_t i = 0; i < static_cast<int64_t>(seg); ++i) {
    const int64_t abs_idx = samples_seen_ - 1 - i;
    if (abs_idx >= 0 &&
        active_ring_[static_cast<size_t>(abs_idx) % ring_capacity_]) {
      ++active_count;
    }
  }
  if (static_cast<double>(active_count) <
      cfg_.min_active_fraction * static_cast<double>(seg)) {
    return std::nullopt;
  }

  // The estimator input lags the reference by the SRO-induced delay; keep
  // the pair aligned to within half a sample by delaying whichever leads.
  const int64_t shift = drift_.integer_shift_applied;
  std::vector<double> input_seg(seg), ref_seg(seg);
  ReadRing(input_ring_, std::max<int64_t>(0, -shift), input_seg);
  ReadRing(ref_ring_, std::max<int64_t>(0, shift), ref_seg);
  Snapshot snap{cadence, shift, Coherence(input_seg, ref_seg, cfg_)};

  std::optional<SroPpm> produced;
  if (!snapshots_.empty() &&
      snapshots_.front().cadence_index == cadence - lag_cadences) {
    const Snapshot& prev = snapshots_.front();
    const double n = static_cast<double>(cfg_.subframe_len());
    // Undo the read-pointer moves made between the two snapshots.
    const double moved = static_cast<double>(shift - prev.integer_shift);
    const double step = -2.0 * std::numbers::pi * moved / n;
    const double alpha = cfg_.smoothing;
    for (size_t k = 0; k < averaged_phase_.size(); ++k) {
      const Complex product = snap.coherence[k] * std::conj(prev.coherence[k]) *
                              std::polar(1.0, step * static_cast<double>(k));
      averaged_phase_[k] = alpha * averaged_phase_[k] + (1.0 - alpha) * product;
    }
    const double distance = static_cast<double>(cfg_.snapshot_distance());
    const int max_lag =
        static_cast<int>(std::ceil(cfg_.max_abs_ppm * 1e-6 * distance)) + 1;
    const int beta_max = GccIntegerPeak(averaged_phase_, max_lag);
    const double beta = GoldenSectionPeak(averaged_phase_, beta_max);
    const double ppm =
        std::clamp(beta / distance * 1e6, -cfg_.max_abs_ppm, cfg_.max_abs_ppm);
    epsilon_hat_ = SroPpm(ppm);
    ++updates_count_;
    produced = epsilon_hat_;
  }
  snapshots_.push_back(std::move(snap));
  return produced;
}

}  // namespace mdaec
