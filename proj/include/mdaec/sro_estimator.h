#ifndef MDAEC_SRO_ESTIMATOR_H_
#define MDAEC_SRO_ESTIMATOR_H_

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "mdaec/resampler.h"
#include "mdaec/stft.h"

namespace mdaec {

struct DwacdConfig {
  size_t segment_len = 8192;
  // Welch sub-frames are 2 * welch_hop long with 50% overlap.
  size_t welch_hop = 512;
  WindowKind welch_window = WindowKind::kHann;
  // Spacing of the two coherence snapshots, in welch hops.
  size_t temporal_distance = 16;
  double smoothing = 0.95;  // alpha
  double fs = 16000.0;
  double vad_threshold_dbfs = -45.0;
  // A segment counts as active when both VAD flags were set for at least
  // this fraction of its samples.
  double min_active_fraction = 0.5;
  // Largest |SRO| the GCC peak search considers.
  double max_abs_ppm = SroPpm::kMaxAbsPpm;

  size_t subframe_len() const { return 2 * welch_hop; }
  size_t num_bins() const { return welch_hop + 1; }
  size_t snapshot_distance() const { return temporal_distance * welch_hop; }
  size_t update_interval() const { return segment_len / 2; }

  void Validate() const;
};

// Welch estimate of the complex coherence between two equally long blocks.
// Bins whose auto-PSD product falls below 1e-12 of the product of the mean
// auto-PSDs are set to zero.
std::vector<Complex> Coherence(std::span<const double> input,
                               std::span<const double> ref,
                               const DwacdConfig& cfg);

// Band-limited interpolation of the GCC at a fractional lag from the
// one-sided phase function `phase` (N/2 + 1 bins of an N-point DFT).
double GccAt(std::span<const Complex> phase, double lag);

// Integer lag in [-max_lag, max_lag] maximizing |IDFT{phase}|.
int GccIntegerPeak(std::span<const Complex> phase, int max_lag);

// Golden-section maximization of |GccAt| over [beta_max - 0.5,
// beta_max + 0.5], stopping once the bracket is narrower than 1e-3.
double GoldenSectionPeak(std::span<const Complex> phase, int beta_max);

double RmsDbfs(std::span<const double> block);

// True iff the block RMS exceeds the threshold.
bool EnergyVad(std::span<const double> block, double threshold_dbfs);

// Online coherence-drift SRO estimator. Feeds on time-domain blocks of the
// estimator input (an AEC error signal) and the far-end reference; every
// segment_len / 2 samples it takes the newest segment, and if both signals
// were active it multiplies the fresh coherence with the conjugate of the
// one taken a segment earlier, smooths the product recursively and reads the
// SRO off the GCC peak.
class SroEstimator {
 public:
  explicit SroEstimator(const DwacdConfig& cfg = {});

  // Returns the new estimate when one was produced by this call.
  // Throws std::invalid_argument on non-finite samples or mismatched block
  // sizes; the estimator state is left untouched in that case.
  std::optional<SroPpm> Update(std::span<const double> input,
                               std::span<const double> ref, bool vad_input,
                               bool vad_ref);

  SroPpm epsilon_hat() const { return epsilon_hat_; }
  int64_t updates_count() const { return updates_count_; }
  const std::vector<Complex>& averaged_phase() const { return averaged_phase_; }
  const DriftState& drift() const { return drift_; }
  int64_t samples_seen() const { return samples_seen_; }
  const DwacdConfig& config() const { return cfg_; }

 private:
  struct Snapshot {
    int64_t cadence_index;
    int64_t integer_shift;
    std::vector<Complex> coherence;
  };

  void AdvanceAlignment(size_t num_samples);
  void GrowRings(size_t capacity);
  std::optional<SroPpm> RunCadence();
  // Copies the `len` samples ending `delay` samples before the newest one.
  void ReadRing(const std::vector<double>& ring, int64_t delay,
                std::span<double> out) const;

  DwacdConfig cfg_;
  size_t ring_capacity_;
  std::vector<double> input_ring_;
  std::vector<double> ref_ring_;
  std::vector<uint8_t> active_ring_;
  int64_t samples_seen_ = 0;
  int64_t next_cadence_at_;
  int64_t cadence_index_ = 0;

  std::deque<Snapshot> snapshots_;
  std::vector<Complex> averaged_phase_;
  DriftState drift_;
  SroPpm epsilon_hat_;
  int64_t updates_count_ = 0;
};

}  // namespace mdaec

#endif  // MDAEC_SRO_ESTIMATOR_H_
