#include "mdaec/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mdaec/sro_estimator.h"

namespace mdaec {

double MeanPower(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

double PowerDb(std::span<const double> x) {
  const double p = MeanPower(x);
  return p > 0.0 ? 10.0 * std::log10(p)
                 : -std::numeric_limits<double>::infinity();
}

namespace {

double ClippedRatioDb(double num, double den, bool& clipped) {
  if (den <= 0.0 || num <= 0.0) {
    clipped = true;
    return den <= 0.0 ? kMetricClipDb : -kMetricClipDb;
  }
  const double db = 10.0 * std::log10(num / den);
  if (std::abs(db) > kMetricClipDb) {
    clipped = true;
    return std::clamp(db, -kMetricClipDb, kMetricClipDb);
  }
  return db;
}

}  // namespace

ErleResult Erle(std::span<const double> echo, std::span<const double> residual,
                double fs, double window_s, double eval_span_s) {
  if (echo.size() != residual.size()) {
    throw std::invalid_argument("Erle: signal lengths differ");
  }
  ErleResult r;
  r.series.window_s = window_s;
  const size_t win = static_cast<size_t>(std::llround(window_s * fs));
  if (win == 0) throw std::invalid_argument("Erle: empty window");
  const size_t count = echo.size() / win;
  const double duration = static_cast<double>(count * win) / fs;
  double sum = 0.0;
  size_t used = 0;
  for (size_t w = 0; w < count; ++w) {
    double d2 = 0.0, e2 = 0.0;
    for (size_t i = w * win; i < (w + 1) * win; ++i) {
      d2 += echo[i] * echo[i];
      e2 += residual[i] * residual[i];
    }
    const double t = static_cast<double>(w * win) / fs;
    const double v = ClippedRatioDb(d2, e2, r.clipped);
    r.series.time.push_back(t);
    r.series.value.push_back(v);
    if (t >= duration - eval_span_s - 1e-9) {
      sum += v;
      ++used;
    }
  }
  r.mean_db = used > 0 ? sum / static_cast<double>(used) : 0.0;
  return r;
}

double NearEndDistortion(std::span<const double> z_clean,
                         std::span<const double> output,
                         std::span<const uint8_t> active_mask) {
  if (z_clean.size() != output.size() || active_mask.size() != z_clean.size()) {
    throw std::invalid_argument("NearEndDistortion: signal lengths differ");
  }
  double z2 = 0.0, err2 = 0.0;
  size_t active = 0;
  for (size_t i = 0; i < z_clean.size(); ++i) {
    if (!active_mask[i]) continue;
    ++active;
    z2 += z_clean[i] * z_clean[i];
    const double d = output[i] - z_clean[i];
    err2 += d * d;
  }
  if (active == 0) {
    throw std::invalid_argument("NearEndDistortion: empty activity mask");
  }
  bool clipped = false;
  return ClippedRatioDb(z2, err2, clipped);
}

std::vector<uint8_t> BlockActivityMask(std::span<const double> clean,
                                       size_t block_len,
                                       double threshold_dbfs) {
  std::vector<uint8_t> mask(clean.size(), 0);
  for (size_t start = 0; start < clean.size(); start += block_len) {
    const size_t len = std::min(block_len, clean.size() - start);
    const uint8_t on =
        EnergyVad(clean.subspan(start, len), threshold_dbfs) ? 1 : 0;
    std::fill(mask.begin() + start, mask.begin() + start + len, on);
  }
  return mask;
}

double SroConvergence(const MetricSeries& trajectory, SroPpm true_sro,
                      double tol_ppm) {
  if (trajectory.value.empty()) {
    throw std::invalid_argument("SroConvergence: empty trajectory");
  }
  size_t i = trajectory.value.size();
  while (i > 0 &&
         std::abs(trajectory.value[i - 1] - true_sro.ppm()) < tol_ppm) {
    --i;
  }
  if (i == trajectory.value.size())
    return std::numeric_limits<double>::infinity();
  return trajectory.time[i];
}

double MaxDeviation(const MetricSeries& trajectory, double true_value,
                    double from_s, double to_s) {
  double worst = 0.0;
  for (size_t i = 0; i < trajectory.value.size(); ++i) {
    if (trajectory.time[i] < from_s || trajectory.time[i] >= to_s) continue;
    worst = std::max(worst, std::abs(trajectory.value[i] - true_value));
  }
  return worst;
}

}  // namespace mdaec
