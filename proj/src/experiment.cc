#include "mdaec/experiment.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mdaec {

TrialScene PrepareTrial(const TrialSpec& spec) {
  TrialScene t;
  t.spec = spec;
  t.scene = SampleScene(spec.seed);
  t.scene.mode = spec.playback;
  t.scene.double_talk = spec.double_talk;
  if (spec.epc) t.scene.epc_schedule = DefaultEpcSchedule();
  t.epochs = ApplyEpc(t.scene, t.scene.epc_schedule);

  SourceSpec src;
  src.duration_s = spec.duration_s;
  src.seed = spec.seed * 4 + 1;
  t.x1 = SynthSpeechLike(src);
  if (spec.playback == PlaybackMode::kCorrelated) {
    t.x2 = t.x1;
  } else {
    src.seed = spec.seed * 4 + 2;
    t.x2 = SynthSpeechLike(src);
  }
  if (spec.double_talk) {
    src.seed = spec.seed * 4 + 3;
    t.z = SynthSpeechLike(src);
  }
  return t;
}

RenderedScene RenderTrial(const TrialScene& trial, double sro_ppm) {
  SceneConfig cfg = trial.scene;
  cfg.sro = SroPpm(sro_ppm);
  return Render(cfg, trial.x1, trial.x2, trial.z, trial.epochs);
}

OutputScores ScoreOutput(std::span<const double> output,
                         std::span<const double> echo,
                         std::span<const double> near_end,
                         std::span<const double> noise, double fs,
                         bool double_talk, const EvaluationOptions& options) {
  if (output.size() != echo.size() || near_end.size() != echo.size() ||
      noise.size() != echo.size()) {
    throw std::invalid_argument("ScoreOutput: signal lengths differ");
  }
  OutputScores s;
  std::vector<double> residual(output.begin(), output.end());
  if (double_talk) {
    for (size_t i = 0; i < residual.size(); ++i) {
      residual[i] -= near_end[i] + noise[i];
    }
    const std::vector<uint8_t> mask = BlockActivityMask(
        near_end, 256,
        PowerDb(near_end) - options.pipeline.input_vad_margin_db);
    s.ned_db = NearEndDistortion(near_end, output, mask);
  } else {
    s.ned_db = std::numeric_limits<double>::quiet_NaN();
  }
  s.erle = Erle(echo, residual, fs, options.erle_window_s, options.erle_span_s);
  return s;
}

SystemResult EvaluateSystem(SystemKind kind, const TrialScene& trial,
                            const RenderedScene& rendered,
                            const EvaluationOptions& options) {
  SystemResult r;
  r.kind = kind;
  PipelineConfig pcfg = options.pipeline;
  pcfg.true_sro = SroPpm(kind == SystemKind::kNoSro ? 0.0 : trial.spec.sro_ppm);
  r.output = Run(kind, rendered, pcfg);
  OutputScores scores =
      ScoreOutput(r.output.error, rendered.TotalEcho(), rendered.near_end,
                  rendered.noise, rendered.fs, trial.spec.double_talk, options);
  r.erle = std::move(scores.erle);
  r.erle_db = r.erle.mean_db;
  r.ned_db = scores.ned_db;
  r.sro_conv_s = SroConvergence(r.output.sro_trajectory, pcfg.true_sro,
                                options.conv_tol_ppm);
  return r;
}

SystemResult EvaluateSystem(SystemKind kind, const TrialScene& trial,
                            const EvaluationOptions& options) {
  const RenderedScene rendered =
      RenderTrial(trial, kind == SystemKind::kNoSro ? 0.0 : trial.spec.sro_ppm);
  return EvaluateSystem(kind, trial, rendered, options);
}

std::vector<double> ExperimentConfig::DefaultGrid() {
  std::vector<double> g;
  for (int p = -150; p <= 150; p += 25) g.push_back(p);
  return g;
}

void ExperimentConfig::Validate() const {
  if (num_trials < 1) throw ConfigError("num_trials must be >= 1");
  if (systems.empty()) throw ConfigError("no systems selected");
  for (double p : sro_grid) {
    if (!std::isfinite(p) || std::abs(p) > 150.0) {
      throw ConfigError("sro_grid value " + std::to_string(p) +
                        " outside +-150 ppm");
    }
  }
  if (!(duration_s > 0.0)) throw ConfigError("duration must be positive");
  if (workers < 0) throw ConfigError("workers must be >= 0");
}

std::string ToString(TalkMode mode) {
  return mode == TalkMode::kDoubleTalk ? "double_talk" : "echo_only";
}

TalkMode ParseTalkMode(const std::string& s) {
  if (s == "echo_only") return TalkMode::kEchoOnly;
  if (s == "double_talk") return TalkMode::kDoubleTalk;
  throw ConfigError("unknown talk mode '" + s + "'");
}

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double ParseDouble(const std::string& key, const std::string& v) {
  size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size())
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  return d;
}

long long ParseInt(const std::string& key, const std::string& v) {
  size_t used = 0;
  long long d = 0;
  try {
    d = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size())
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  return d;
}

std::string FormatNumber(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string FormatGridValue(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

std::map<std::string, std::string> ParseKeyValues(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    kv[Trim(line.substr(0, eq))] = Trim(line.substr(eq + 1));
  }
  return kv;
}

void ApplyKeyValues(const std::map<std::string, std::string>& kv,
                    ExperimentConfig& cfg) {
  for (const auto& [key, value] : kv) {
    try {
      if (key == "systems") {
        cfg.systems.clear();
        for (const auto& s : SplitList(value))
          cfg.systems.push_back(ParseSystemKind(s));
      } else if (key == "sro_grid") {
        cfg.sro_grid.clear();
        for (const auto& s : SplitList(value))
          cfg.sro_grid.push_back(ParseDouble(key, s));
      } else if (key == "num_trials") {
        cfg.num_trials = static_cast<int>(ParseInt(key, value));
      } else if (key == "talk") {
        cfg.talk = ParseTalkMode(value);
      } else if (key == "playback") {
        cfg.playback = ParsePlaybackMode(value);
      } else if (key == "epc") {
        if (value != "true" && value != "false") {
          throw ConfigError("epc must be true or false");
        }
        cfg.epc = value == "true";
      } else if (key == "seed_base") {
        cfg.seed_base = static_cast<uint64_t>(ParseInt(key, value));
      } else if (key == "output_dir") {
        cfg.output_dir = value;
      } else if (key == "duration_s") {
        cfg.duration_s = ParseDouble(key, value);
      } else if (key == "workers") {
        cfg.workers = static_cast<int>(ParseInt(key, value));
      } else if (key == "conv_tol_ppm") {
        cfg.conv_tol_ppm = ParseDouble(key, value);
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

std::string FormatConfig(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "systems = ";
  for (size_t i = 0; i < cfg.systems.size(); ++i) {
    os << (i ? "," : "") << ToString(cfg.systems[i]);
  }
  os << "\nsro_grid = ";
  for (size_t i = 0; i < cfg.sro_grid.size(); ++i) {
    os << (i ? "," : "") << FormatGridValue(cfg.sro_grid[i]);
  }
  os << "\nnum_trials = " << cfg.num_trials << "\ntalk = " << ToString(cfg.talk)
     << "\nplayback = " << ToString(cfg.playback)
     << "\nepc = " << (cfg.epc ? "true" : "false")
     << "\nseed_base = " << cfg.seed_base
     << "\noutput_dir = " << cfg.output_dir.string()
     << "\nduration_s = " << FormatGridValue(cfg.duration_s)
     << "\nworkers = " << cfg.workers
     << "\nconv_tol_ppm = " << FormatGridValue(cfg.conv_tol_ppm) << "\n";
  return os.str();
}

std::string TrialCsvHeader() {
  return "trial,system,sro_ppm,mode,erle_db,ned_db,sro_conv_s,seed";
}

std::string FormatTrialRow(const TrialRow& row) {
  std::ostringstream os;
  os << row.trial << ',' << ToString(row.system) << ','
     << FormatGridValue(row.sro_ppm) << ',' << row.mode << ','
     << FormatNumber(row.erle_db) << ',' << FormatNumber(row.ned_db) << ','
     << FormatNumber(row.sro_conv_s) << ',' << row.seed;
  return os.str();
}

void ParallelFor(int count, int workers, const std::function<void(int)>& work) {
  if (workers <= 0) {
    workers =
        static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) work(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          work(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void EnsureWritableDir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto probe = dir / ".write_probe";
  std::ofstream f(probe);
  if (ec || !f) {
    throw ConfigError("output directory " + dir.string() + " is not writable");
  }
  f.close();
  std::filesystem::remove(probe, ec);
}

void WriteManifest(const ExperimentConfig& cfg,
                   const std::filesystem::path& dir) {
  std::ofstream f(dir / "manifest.txt");
  const std::time_t now = std::time(nullptr);
  char stamp[64];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  f << "# written " << stamp << "\n" << FormatConfig(cfg);
}

void WriteSeriesCsv(const std::filesystem::path& path, const MetricSeries& s) {
  std::ofstream f(path);
  f << "t_s,value\n";
  for (size_t i = 0; i < s.time.size(); ++i) {
    f << FormatNumber(s.time[i]) << ',' << FormatNumber(s.value[i]) << '\n';
  }
}

namespace {

std::string ModeLabel(const ExperimentConfig& cfg) {
  return ToString(cfg.talk) + "-" + ToString(cfg.playback);
}

EvaluationOptions OptionsFor(const ExperimentConfig& cfg) {
  EvaluationOptions o;
  o.conv_tol_ppm = cfg.conv_tol_ppm;
  o.erle_span_s = std::min(30.0, cfg.duration_s);
  return o;
}

TrialRow MakeRow(int trial, const SystemResult& r, double sro, uint64_t seed,
                 const std::string& mode) {
  return TrialRow{trial,     r.kind,   sro,          mode,
                  r.erle_db, r.ned_db, r.sro_conv_s, seed};
}

void LogTrial(const std::string& what, int trial, uint64_t seed) {
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << what << " trial " << trial << " (seed " << seed << ") done\n";
}

}  // namespace

std::vector<TrialRow> RunSweep(const ExperimentConfig& cfg) {
  cfg.Validate();
  EnsureWritableDir(cfg.output_dir);
  WriteManifest(cfg, cfg.output_dir);
  const std::string mode = ModeLabel(cfg);
  const EvaluationOptions options = OptionsFor(cfg);
  const size_t per_trial = cfg.sro_grid.size() * cfg.systems.size();
  std::vector<TrialRow> rows(static_cast<size_t>(cfg.num_trials) * per_trial);

  ParallelFor(cfg.num_trials, cfg.workers, [&](int i) {
    TrialSpec spec;
    spec.seed = cfg.seed_base + static_cast<uint64_t>(i);
    spec.playback = cfg.playback;
    spec.double_talk = cfg.talk == TalkMode::kDoubleTalk;
    spec.duration_s = cfg.duration_s;
    TrialScene trial = PrepareTrial(spec);
    std::optional<SystemResult> no_sro;
    for (size_t g = 0; g < cfg.sro_grid.size(); ++g) {
      trial.spec.sro_ppm = cfg.sro_grid[g];
      std::optional<RenderedScene> rendered;
      for (size_t s = 0; s < cfg.systems.size(); ++s) {
        const SystemKind kind = cfg.systems[s];
        SystemResult r;
        if (kind == SystemKind::kNoSro) {
          // Independent of the grid value.
          if (!no_sro) no_sro = EvaluateSystem(kind, trial, options);
          r = *no_sro;
        } else {
          if (!rendered) rendered = RenderTrial(trial, trial.spec.sro_ppm);
          r = EvaluateSystem(kind, trial, *rendered, options);
        }
        rows[(g * cfg.systems.size() + s) * cfg.num_trials + i] =
            MakeRow(i, r, cfg.sro_grid[g], spec.seed, mode);
      }
    }
    LogTrial("sweep", i, spec.seed);
  });

  std::ofstream trials(cfg.output_dir / "trials.csv");
  trials << TrialCsvHeader() << '\n';
  for (const TrialRow& row : rows) trials << FormatTrialRow(row) << '\n';

  std::ofstream agg(cfg.output_dir / "aggregate.csv");
  agg << "sro_ppm,system,mode,count,erle_mean_db,erle_std_db,ned_mean_db,"
         "ned_std_db\n";
  for (size_t g = 0; g < cfg.sro_grid.size(); ++g) {
    for (size_t s = 0; s < cfg.systems.size(); ++s) {
      double se = 0, se2 = 0, sn = 0, sn2 = 0;
      const int n = cfg.num_trials;
      for (int i = 0; i < n; ++i) {
        const TrialRow& r = rows[(g * cfg.systems.size() + s) * n + i];
        se += r.erle_db;
        se2 += r.erle_db * r.erle_db;
        sn += r.ned_db;
        sn2 += r.ned_db * r.ned_db;
      }
      auto stdev = [n](double sum, double sum2) {
        if (n < 2) return 0.0;
        const double mean = sum / n;
        return std::sqrt(std::max(0.0, (sum2 - n * mean * mean) / (n - 1)));
      };
      agg << FormatGridValue(cfg.sro_grid[g]) << ',' << ToString(cfg.systems[s])
          << ',' << mode << ',' << n << ',' << FormatNumber(se / n) << ','
          << FormatNumber(stdev(se, se2)) << ',' << FormatNumber(sn / n) << ','
          << FormatNumber(std::isnan(sn) ? sn : stdev(sn, sn2)) << '\n';
    }
  }
  return rows;
}

std::vector<TrialRow> RunEpc(const ExperimentConfig& cfg) {
  cfg.Validate();
  EnsureWritableDir(cfg.output_dir);
  WriteManifest(cfg, cfg.output_dir);
  const std::string mode = ModeLabel(cfg);
  EvaluationOptions options = OptionsFor(cfg);
  const size_t grid = std::max<size_t>(1, cfg.sro_grid.size());
  std::vector<TrialRow> rows(static_cast<size_t>(cfg.num_trials) * grid *
                             cfg.systems.size());
  ParallelFor(cfg.num_trials, cfg.workers, [&](int i) {
    TrialSpec spec;
    spec.seed = cfg.seed_base + static_cast<uint64_t>(i);
    spec.playback = cfg.playback;
    spec.double_talk = cfg.talk == TalkMode::kDoubleTalk;
    spec.epc = true;
    spec.duration_s = cfg.duration_s;
    TrialScene trial = PrepareTrial(spec);
    for (size_t g = 0; g < grid; ++g) {
      trial.spec.sro_ppm = cfg.sro_grid.empty() ? 100.0 : cfg.sro_grid[g];
      std::optional<RenderedScene> rendered;
      for (size_t s = 0; s < cfg.systems.size(); ++s) {
        const SystemKind kind = cfg.systems[s];
        SystemResult r;
        if (kind == SystemKind::kNoSro) {
          r = EvaluateSystem(kind, trial, options);
        } else {
          if (!rendered) rendered = RenderTrial(trial, trial.spec.sro_ppm);
          r = EvaluateSystem(kind, trial, *rendered, options);
        }
        char name[128];
        std::snprintf(name, sizeof(name), "sro_trial%03d_%s_%gppm.csv", i,
                      ToString(cfg.systems[s]).c_str(), trial.spec.sro_ppm);
        WriteSeriesCsv(cfg.output_dir / name, r.output.sro_trajectory);
        rows[(g * cfg.systems.size() + s) * cfg.num_trials + i] =
            MakeRow(i, r, trial.spec.sro_ppm, spec.seed, mode);
      }
    }
    LogTrial("epc", i, spec.seed);
  });
  std::ofstream trials(cfg.output_dir / "trials.csv");
  trials << TrialCsvHeader() << '\n';
  for (const TrialRow& row : rows) trials << FormatTrialRow(row) << '\n';
  return rows;
}

}  // namespace mdaec
