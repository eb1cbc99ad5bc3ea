#include "mdaec/pipeline.h"

#include <algorithm>
#include <stdexcept>

namespace mdaec {

std::string ToString(SystemKind kind) {
  switch (kind) {
    case SystemKind::kVariant1: return "variant1";
    case SystemKind::kVariant2: return "variant2";
    case SystemKind::kNoSro: return "no_sro";
    case SystemKind::kNoCompensation: return "no_compensation";
    case SystemKind::kOracleSro: return "oracle";
  }
  return "oracle";
}

SystemKind ParseSystemKind(const std::string& s) {
  for (SystemKind k : kAllSystems) {
    if (ToString(k) == s) return k;
  }
  throw std::invalid_argument("unknown system '" + s + "'");
}

double CleanInputLevelDbfs(const RenderedScene& scene) {
  std::vector<double> clean(scene.mic.size());
  for (size_t i = 0; i < clean.size(); ++i) {
    clean[i] = scene.echo[0][i] + scene.echo[1][i] + scene.near_end[i];
  }
  return PowerDb(clean);
}

namespace {

// Copies x[end - len, end) with zeros outside the signal.
void ReadBlock(const std::vector<double>& x, int64_t end,
               std::span<double> out) {
  const int64_t len = static_cast<int64_t>(out.size());
  const int64_t n = static_cast<int64_t>(x.size());
  for (int64_t i = 0; i < len; ++i) {
    const int64_t idx = end - len + i;
    out[static_cast<size_t>(i)] =
        (idx >= 0 && idx < n) ? x[static_cast<size_t>(idx)] : 0.0;
  }
}

}  // namespace

PipelineOutput Run(SystemKind kind, const RenderedScene& scene,
                   const PipelineConfig& cfg) {
  const size_t n = scene.mic.size();
  const size_t hop = cfg.kalman.hop;
  const size_t block = cfg.kalman.fft_size;
  const bool estimates =
      kind == SystemKind::kVariant1 || kind == SystemKind::kVariant2;
  const bool compensates = estimates || kind == SystemKind::kOracleSro;

  KalmanConfig two_ch = cfg.kalman;
  two_ch.num_channels = 2;
  PartitionedKalmanFilter aec(two_ch);
  std::optional<PartitionedKalmanFilter> single;
  if (kind == SystemKind::kVariant2) {
    KalmanConfig one_ch = cfg.kalman;
    one_ch.num_channels = 1;
    single.emplace(one_ch);
  }
  std::optional<SroEstimator> estimator;
  if (estimates) estimator.emplace(cfg.dwacd);

  const double input_threshold =
      cfg.input_vad_threshold_dbfs
          ? *cfg.input_vad_threshold_dbfs
          : CleanInputLevelDbfs(scene) - cfg.input_vad_margin_db;

  StftConfig comp_cfg;
  comp_cfg.window_size = block;
  comp_cfg.hop_size = hop;
  comp_cfg.window = WindowKind::kRectangular;

  PipelineOutput out;
  out.error = scene.mic;
  if (kind == SystemKind::kVariant2) out.error_single = scene.mic;
  out.sro_trajectory.window_s =
      static_cast<double>(hop * cfg.trajectory_every) / scene.fs;

  DriftState drift;
  SroPpm sro_in_use = kind == SystemKind::kOracleSro ? cfg.true_sro : SroPpm();
  std::vector<double> ref_block(block), mic_hop(hop), clean_hop(hop);
  const size_t num_frames = n / hop;
  for (size_t m = 0; m < num_frames; ++m) {
    const int64_t frame_end = static_cast<int64_t>((m + 1) * hop);
    const int64_t fi = static_cast<int64_t>(m);
    if (estimator) sro_in_use = estimator->epsilon_hat();

    std::array<SpectralFrame, 2> refs;
    ReadBlock(scene.far_end[0], frame_end, ref_block);
    refs[0] = aec.ReferenceFrame(ref_block, fi, 0);
    if (compensates) {
      ReadBlock(scene.far_end[1], frame_end - drift.integer_shift_applied,
                ref_block);
      CompensationResult c = CompensateReference(
          aec.ReferenceFrame(ref_block, fi, 1), sro_in_use, drift, comp_cfg);
      refs[1] = std::move(c.frame);
      drift = c.drift;
    } else {
      ReadBlock(scene.far_end[1], frame_end, ref_block);
      refs[1] = aec.ReferenceFrame(ref_block, fi, 1);
    }

    ReadBlock(scene.mic, frame_end, mic_hop);
    const SpectralFrame mic = aec.MicFrame(mic_hop, fi);
    KalmanFrameOutput res;
    try {
      res = aec.ProcessFrame(mic, refs);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(ToString(kind) + " frame " + std::to_string(m) +
                               ": " + e.what());
    }
    std::copy(res.error_time.begin(), res.error_time.end(),
              out.error.begin() + static_cast<int64_t>(m * hop));

    const std::vector<double>* estimator_input = &res.error_time;
    KalmanFrameOutput res0;
    if (single) {
      const std::array<SpectralFrame, 1> ref0 = {refs[0]};
      res0 = single->ProcessFrame(mic, ref0);
      std::copy(res0.error_time.begin(), res0.error_time.end(),
                out.error_single.begin() + static_cast<int64_t>(m * hop));
      estimator_input = &res0.error_time;
    }

    if (estimator) {
      for (size_t i = 0; i < hop; ++i) {
        const size_t idx = m * hop + i;
        clean_hop[i] =
            scene.echo[0][idx] + scene.echo[1][idx] + scene.near_end[idx];
      }
      const std::span<const double> ref_hop(scene.far_end[1].data() + m * hop,
                                            hop);
      const bool vad_in = EnergyVad(clean_hop, input_threshold);
      const bool vad_ref = EnergyVad(ref_hop, cfg.ref_vad_threshold_dbfs);
      try {
        estimator->Update(*estimator_input, ref_hop, vad_in, vad_ref);
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(ToString(kind) + " frame " +
                                 std::to_string(m) + ": " + e.what());
      }
    }
    if (m % cfg.trajectory_every == 0) {
      out.sro_trajectory.time.push_back(static_cast<double>(m * hop) /
                                        scene.fs);
      out.sro_trajectory.value.push_back(sro_in_use.ppm());
    }
  }
  out.final_sro_ppm =
      estimator ? estimator->epsilon_hat().ppm() : sro_in_use.ppm();
  return out;
}

}  // namespace mdaec
