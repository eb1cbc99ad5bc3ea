// Experiment runner: SRO sweeps, echo-path-change runs, single-trial
// artifacts and metric recomputation from stored WAV files.
//
// Exit codes: 0 success, 2 configuration error, 1 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdaec/experiment.h"

namespace fs = std::filesystem;
using namespace mdaec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr const char* kOutputDirEnv = "MDAEC_OUTPUT_DIR";

// Flags shared by the experiment subcommands. Each one maps onto a config
// key; only flags given on the command line override the file.
struct CommonFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;
};

void AddCommonFlags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("-c,--config", flags.config_file,
                  "key = value file; flags override it")
      ->check(CLI::ExistingFile);
  struct Flag {
    const char* name;
    const char* key;
    const char* help;
  };
  static const Flag kFlags[] = {
      {"--systems", "systems",
       "comma list of variant1,variant2,no_sro,no_compensation,oracle"},
      {"--sro-grid", "sro_grid", "comma list of SRO values in ppm"},
      {"--trials", "num_trials", "trials per grid point"},
      {"--talk", "talk", "echo_only or double_talk"},
      {"--playback", "playback", "uncorrelated or correlated"},
      {"--seed-base", "seed_base", "seed of the first trial"},
      {"--output-dir", "output_dir", "result directory (env MDAEC_OUTPUT_DIR)"},
      {"--duration", "duration_s", "signal duration in seconds"},
      {"--workers", "workers", "worker threads (0: all cores)"},
      {"--conv-tol", "conv_tol_ppm", "SRO convergence band in ppm"},
  };
  for (const Flag& f : kFlags) {
    const std::string key = f.key;
    cmd->add_option_function<std::string>(
        f.name,
        [&flags, key](const std::string& v) { flags.overrides[key] = v; },
        f.help);
  }
}

std::string ReadText(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Defaults, then the config file, then the environment, then flags.
ExperimentConfig ResolveConfig(const CommonFlags& flags, ExperimentConfig cfg) {
  if (!flags.config_file.empty()) {
    ApplyKeyValues(ParseKeyValues(ReadText(flags.config_file)), cfg);
  }
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    cfg.output_dir = env;
  }
  ApplyKeyValues(flags.overrides, cfg);
  cfg.Validate();
  return cfg;
}

std::string WavName(const std::string& stem) { return stem + ".wav"; }

void WriteComponents(const fs::path& dir, const RenderedScene& s) {
  fs::create_directories(dir);
  WriteWav(dir / "mic.wav", s.mic, s.fs);
  WriteWav(dir / "echo.wav", s.TotalEcho(), s.fs);
  WriteWav(dir / "echo1.wav", s.echo[0], s.fs);
  WriteWav(dir / "echo2.wav", s.echo[1], s.fs);
  WriteWav(dir / "near_end.wav", s.near_end, s.fs);
  WriteWav(dir / "noise.wav", s.noise, s.fs);
  WriteWav(dir / "far_end1.wav", s.far_end[0], s.fs);
  WriteWav(dir / "far_end2.wav", s.far_end[1], s.fs);
}

// Components a system ran on: the synchronous render for no_sro, the
// drifting one otherwise.
fs::path SceneDirFor(const fs::path& root, SystemKind kind) {
  return root / (kind == SystemKind::kNoSro ? "scene_no_sro" : "scene");
}

int RunSingle(const ExperimentConfig& cfg) {
  if (cfg.sro_grid.size() != 1) {
    throw ConfigError("single takes exactly one --sro-grid value");
  }
  EnsureWritableDir(cfg.output_dir);
  WriteManifest(cfg, cfg.output_dir);
  TrialSpec spec;
  spec.seed = cfg.seed_base;
  spec.sro_ppm = cfg.sro_grid[0];
  spec.playback = cfg.playback;
  spec.double_talk = cfg.talk == TalkMode::kDoubleTalk;
  spec.epc = cfg.epc;
  spec.duration_s = cfg.duration_s;
  const TrialScene trial = PrepareTrial(spec);
  EvaluationOptions options;
  options.conv_tol_ppm = cfg.conv_tol_ppm;
  options.erle_span_s = std::min(30.0, cfg.duration_s);

  std::optional<RenderedScene> drifting, synced;
  std::ofstream rows(cfg.output_dir / "trials.csv");
  rows << TrialCsvHeader() << '\n';
  const std::string mode = ToString(cfg.talk) + "-" + ToString(cfg.playback);
  for (SystemKind kind : cfg.systems) {
    auto& rendered = kind == SystemKind::kNoSro ? synced : drifting;
    if (!rendered) {
      rendered =
          RenderTrial(trial, kind == SystemKind::kNoSro ? 0.0 : spec.sro_ppm);
      WriteComponents(SceneDirFor(cfg.output_dir, kind), *rendered);
    }
    const SystemResult r = EvaluateSystem(kind, trial, *rendered, options);
    const std::string name = ToString(kind);
    WriteWav(cfg.output_dir / WavName("out_" + name), r.output.error,
             rendered->fs);
    WriteSeriesCsv(cfg.output_dir / ("erle_" + name + ".csv"), r.erle.series);
    WriteSeriesCsv(cfg.output_dir / ("sro_" + name + ".csv"),
                   r.output.sro_trajectory);
    rows << FormatTrialRow(TrialRow{0, kind, spec.sro_ppm, mode, r.erle_db,
                                    r.ned_db, r.sro_conv_s, spec.seed})
         << '\n';
    std::cerr << name << ": erle " << r.erle_db << " dB, final sro "
              << r.output.final_sro_ppm << " ppm\n";
  }
  return kExitOk;
}

// Recomputes ERLE and near-end distortion from the WAV files written by
// `single`.
int RunMetrics(const fs::path& dir, double span_s) {
  if (!fs::is_directory(dir)) {
    throw ConfigError(dir.string() + " is not a directory");
  }
  EvaluationOptions options;
  options.erle_span_s = span_s;
  std::ofstream out(dir / "metrics.csv");
  out << "system,erle_db,ned_db\n";
  int found = 0;
  for (SystemKind kind : kAllSystems) {
    const fs::path wav = dir / WavName("out_" + ToString(kind));
    if (!fs::exists(wav)) continue;
    const fs::path scene = SceneDirFor(dir, kind);
    const WavData output = LoadWav(wav);
    const WavData echo = LoadWav(scene / "echo.wav");
    const WavData near_end = LoadWav(scene / "near_end.wav");
    const WavData noise = LoadWav(scene / "noise.wav");
    bool talker = false;
    for (double v : near_end.samples) talker = talker || v != 0.0;
    const OutputScores s =
        ScoreOutput(output.samples, echo.samples, near_end.samples,
                    noise.samples, output.fs, talker, options);
    out << ToString(kind) << ',' << s.erle.mean_db << ',' << s.ned_db << '\n';
    std::cout << ToString(kind) << ": erle " << s.erle.mean_db << " dB, ned "
              << s.ned_db << " dB\n";
    ++found;
  }
  if (found == 0) {
    throw ConfigError("no out_<system>.wav files in " + dir.string());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-device acoustic echo cancellation with SRO estimation"};
  app.require_subcommand(1);

  CommonFlags sweep_flags, epc_flags, single_flags;
  CLI::App* sweep =
      app.add_subcommand("sweep", "ERLE versus SRO over random scenes");
  AddCommonFlags(sweep, sweep_flags);
  CLI::App* epc =
      app.add_subcommand("epc", "SRO tracking across echo-path changes");
  AddCommonFlags(epc, epc_flags);
  CLI::App* single =
      app.add_subcommand("single", "one trial with WAV and CSV artifacts");
  AddCommonFlags(single, single_flags);
  bool single_epc = false;
  single->add_flag("--epc", single_epc, "apply the 15/30/45 s path changes");

  CLI::App* metrics = app.add_subcommand(
      "metrics", "recompute metrics from a single-run directory");
  std::string metrics_dir;
  double metrics_span = 30.0;
  metrics->add_option("dir", metrics_dir, "directory written by `single`")
      ->required();
  metrics->add_option("--span", metrics_span,
                      "ERLE evaluation span in seconds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sweep) {
      ExperimentConfig defaults;
      defaults.sro_grid = ExperimentConfig::DefaultGrid();
      RunSweep(ResolveConfig(sweep_flags, defaults));
    } else if (*epc) {
      ExperimentConfig defaults;
      defaults.sro_grid = {100.0};
      defaults.duration_s = 60.0;
      defaults.epc = true;
      const ExperimentConfig cfg = ResolveConfig(epc_flags, defaults);
      if (cfg.duration_s <= DefaultEpcSchedule().back().time_s) {
        throw ConfigError(
            "epc needs a duration beyond the last change at 45 s");
      }
      RunEpc(cfg);
    } else if (*single) {
      ExperimentConfig defaults;
      defaults.sro_grid = {100.0};
      defaults.num_trials = 1;
      defaults.epc = single_epc;
      if (single_epc) defaults.duration_s = 60.0;
      return RunSingle(ResolveConfig(single_flags, defaults));
    } else if (*metrics) {
      return RunMetrics(metrics_dir, metrics_span);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
