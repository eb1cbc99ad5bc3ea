#ifndef MDAEC_EXPERIMENT_H_
#define MDAEC_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdaec/metrics.h"
#include "mdaec/pipeline.h"
#include "mdaec/scene.h"
#include "mdaec/signal_gen.h"

namespace mdaec {

struct TrialSpec {
  uint64_t seed = 0;
  double sro_ppm = 0.0;
  PlaybackMode playback = PlaybackMode::kUncorrelated;
  bool double_talk = false;
  bool epc = false;
  double duration_s = 36.0;
};

// Everything about a trial that does not depend on the SRO: geometry,
// RIR epochs and source signals.
struct TrialScene {
  TrialSpec spec;
  SceneConfig scene;
  std::vector<RirEpoch> epochs;
  std::vector<double> x1;
  std::vector<double> x2;
  std::vector<double> z;  // empty in echo-only trials
};

TrialScene PrepareTrial(const TrialSpec& spec);

// Renders the trial with the given SRO on the device-two echo.
RenderedScene RenderTrial(const TrialScene& trial, double sro_ppm);

struct SystemResult {
  SystemKind kind = SystemKind::kNoSro;
  double erle_db = 0.0;  // over the last 30 s (echo-only)
  double ned_db = 0.0;   // near-end distortion (double-talk), NaN otherwise
  double sro_conv_s = 0.0;
  ErleResult erle;
  PipelineOutput output;
};

struct EvaluationOptions {
  PipelineConfig pipeline;
  double erle_window_s = 0.5;
  double erle_span_s = 30.0;
  double conv_tol_ppm = 5.0;
  double ned_vad_threshold_dbfs = -45.0;
};

struct OutputScores {
  ErleResult erle;
  double ned_db = 0.0;  // NaN without a near-end talker
};

// Scores a system output against the components of the scene it ran on.
// Echo-only scenes use the output itself as the residual; with a near-end
// talker the residual excludes near end and noise, and the near-end
// distortion is measured on an ideal-VAD mask of the talker.
OutputScores ScoreOutput(std::span<const double> output,
                         std::span<const double> echo,
                         std::span<const double> near_end,
                         std::span<const double> noise, double fs,
                         bool double_talk, const EvaluationOptions& options);

// Runs one system on a trial. `rendered` must be RenderTrial(trial, eps)
// with eps = 0 for NoSro and eps = trial.spec.sro_ppm otherwise.
SystemResult EvaluateSystem(SystemKind kind, const TrialScene& trial,
                            const RenderedScene& rendered,
                            const EvaluationOptions& options);

// Convenience: renders as required by `kind` and evaluates.
SystemResult EvaluateSystem(SystemKind kind, const TrialScene& trial,
                            const EvaluationOptions& options);

enum class TalkMode { kEchoOnly, kDoubleTalk };

struct ExperimentConfig {
  std::vector<SystemKind> systems{kAllSystems.begin(), kAllSystems.end()};
  std::vector<double> sro_grid;  // ppm
  int num_trials = 50;
  TalkMode talk = TalkMode::kEchoOnly;
  PlaybackMode playback = PlaybackMode::kUncorrelated;
  bool epc = false;
  uint64_t seed_base = 1;
  std::filesystem::path output_dir = "results";
  double duration_s = 36.0;
  int workers = 0;  // 0: hardware concurrency
  double conv_tol_ppm = 5.0;

  static std::vector<double> DefaultGrid();  // -150..150 step 25
  void Validate() const;                     // throws ConfigError
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string ToString(TalkMode mode);
TalkMode ParseTalkMode(const std::string& s);

// Plain "key = value" text, one key per line, '#' comments.
std::map<std::string, std::string> ParseKeyValues(const std::string& text);
std::string FormatConfig(const ExperimentConfig& cfg);
// Applies recognized keys; throws ConfigError on unknown keys or bad values.
void ApplyKeyValues(const std::map<std::string, std::string>& kv,
                    ExperimentConfig& cfg);

struct TrialRow {
  int trial = 0;
  SystemKind system = SystemKind::kNoSro;
  double sro_ppm = 0.0;
  std::string mode;
  double erle_db = 0.0;
  double ned_db = 0.0;
  double sro_conv_s = 0.0;
  uint64_t seed = 0;
};

std::string TrialCsvHeader();
std::string FormatTrialRow(const TrialRow& row);

// Runs `work(i)` for i in [0, count) on `workers` threads.
void ParallelFor(int count, int workers, const std::function<void(int)>& work);

// Sweep: per-trial rows (trials.csv) and per-grid-point aggregates
// (aggregate.csv) plus a manifest. Returns the rows in deterministic order.
std::vector<TrialRow> RunSweep(const ExperimentConfig& cfg);

// 60 s trials with the 15/30/45 s echo-path changes; writes one SRO
// trajectory file per (trial, system) plus trials.csv.
std::vector<TrialRow> RunEpc(const ExperimentConfig& cfg);

void WriteManifest(const ExperimentConfig& cfg,
                   const std::filesystem::path& dir);

// Creates the directory and checks it is writable; throws ConfigError.
void EnsureWritableDir(const std::filesystem::path& dir);

void WriteSeriesCsv(const std::filesystem::path& path, const MetricSeries& s);

}  // namespace mdaec

#endif  // MDAEC_EXPERIMENT_H_
