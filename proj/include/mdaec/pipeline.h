#ifndef MDAEC_PIPELINE_H_
#define MDAEC_PIPELINE_H_

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mdaec/kalman.h"
#include "mdaec/metrics.h"
#include "mdaec/scene.h"
#include "mdaec/sro_estimator.h"

namespace mdaec {

enum class SystemKind {
  kVariant1,
  kVariant2,
  kNoSro,
  kNoCompensation,
  kOracleSro
};

inline constexpr std::array<SystemKind, 5> kAllSystems = {
    SystemKind::kVariant1, SystemKind::kVariant2, SystemKind::kNoSro,
    SystemKind::kNoCompensation, SystemKind::kOracleSro};

std::string ToString(SystemKind kind);
SystemKind ParseSystemKind(const std::string& s);

struct PipelineConfig {
  KalmanConfig kalman;  // num_channels is set per filter
  DwacdConfig dwacd;
  // SRO driving the OracleSro compensator.
  SroPpm true_sro;
  double ref_vad_threshold_dbfs = -45.0;
  // Ideal-VAD threshold on the clean microphone component. When unset it is
  // placed input_vad_margin_db below that component's overall level.
  std::optional<double> input_vad_threshold_dbfs;
  double input_vad_margin_db = 20.0;
  // SRO trajectory sampling, in AEC frames.
  size_t trajectory_every = 16;
};

struct PipelineOutput {
  std::vector<double> error;         // e, system output
  MetricSeries sro_trajectory;       // estimate in use (ppm) over time
  std::vector<double> error_single;  // e0, Variant 2 only
  double final_sro_ppm = 0.0;
};

// Runs one system over a rendered scene. Frame order: compensate the
// device-two reference, run the two-channel canceller, (Variant 2: run the
// single-channel canceller), feed the estimator. An estimate produced at
// frame m is first used at frame m + 1. NoSro expects a scene rendered
// without SRO; it is otherwise identical to NoCompensation.
PipelineOutput Run(SystemKind kind, const RenderedScene& scene,
                   const PipelineConfig& cfg);

// Level of the clean microphone component used for the ideal VAD.
double CleanInputLevelDbfs(const RenderedScene& scene);

}  // namespace mdaec

#endif  // MDAEC_PIPELINE_H_
