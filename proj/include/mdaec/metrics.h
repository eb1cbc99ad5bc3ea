#ifndef MDAEC_METRICS_H_
#define MDAEC_METRICS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "mdaec/resampler.h"

namespace mdaec {

inline constexpr double kMetricClipDb = 80.0;

// Values on a uniform time grid; time[i] is the start of window i.
struct MetricSeries {
  std::vector<double> time;
  std::vector<double> value;
  double window_s = 0.0;
};

struct ErleResult {
  MetricSeries series;
  double mean_db = 0.0;  // mean of series values over the evaluation span
  bool clipped = false;  // some window hit the +-80 dB clip
};

// ERLE(t) = 10 log10(sum d^2 / sum e^2) over consecutive windows of
// window_s. The scalar is the mean over windows starting within the last
// eval_span_s of the signal.
ErleResult Erle(std::span<const double> echo, std::span<const double> residual,
                double fs, double window_s = 0.5, double eval_span_s = 30.0);

// 10 log10(sum z^2 / sum (out - z)^2) over samples where active_mask is set,
// clipped to +80 dB. Throws std::invalid_argument for an empty mask.
double NearEndDistortion(std::span<const double> z_clean,
                         std::span<const double> output,
                         std::span<const uint8_t> active_mask);

// Per-sample ideal-VAD mask: blocks of block_len samples whose RMS exceeds
// threshold_dbfs are marked active.
std::vector<uint8_t> BlockActivityMask(std::span<const double> clean,
                                       size_t block_len, double threshold_dbfs);

// Time of the first sample from which |value - true| < tol holds for every
// remaining sample; +infinity if the last sample is outside the band.
double SroConvergence(const MetricSeries& trajectory, SroPpm true_sro,
                      double tol_ppm);

// Largest |value - true| over samples with time in [from_s, to_s).
double MaxDeviation(const MetricSeries& trajectory, double true_value,
                    double from_s, double to_s);

double MeanPower(std::span<const double> x);
double PowerDb(std::span<const double> x);

}  // namespace mdaec

#endif  // MDAEC_METRICS_H_
