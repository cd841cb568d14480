#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamrank/labels.hpp"
#include "streamrank/metrics.hpp"
#include "streamrank/model.hpp"
#include "streamrank/sim.hpp"
#include "streamrank/trainer.hpp"

namespace streamrank {

struct TrainerSettings {
  /// Unset: derived from the policy (realtime -> moment, else fast_slow).
  std::optional<ObjectiveMode> mode;
  Seconds bucket_seconds = 0.0;
  ModelHyper hyper;
};

struct MetricSettings {
  LagConfig lag;
  Seconds snapshot_interval = 30.0;
  std::size_t probe_users = 32;
};

struct RunConfig {
  std::uint64_t seed = 7;
  SimConfig sim = SimConfig::defaults();
  ReportPolicy policy;
  /// Policies run by compare-policies; the first is the volume baseline.
  std::vector<ReportPolicy> compare{ReportPolicy::exit_report(), ReportPolicy::fast_slow(),
                                    ReportPolicy::realtime()};
  TrainerSettings trainer;
  MetricSettings metrics;
  std::string out_dir = "runs";

  /// Copies the run seed into every seeded component.
  void apply_seed(std::uint64_t s);
  std::uint64_t model_seed() const;
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults; a top-level "seed" propagates to sim.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);
std::string file_hash(const std::filesystem::path& path);
/// Hash of the canonical JSON of the config, excluding out_dir.
std::string config_hash(const RunConfig& c);

/// Run directory named by config hash, created on demand. Throws
/// std::runtime_error when it cannot be created.
std::filesystem::path run_directory(const RunConfig& c);

/// Writes manifest.json: config, config hash, and the hash of each listed file.
void write_manifest(const std::filesystem::path& dir, const RunConfig& c,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs);

ObjectiveMode resolve_mode(const RunConfig& c, const ReportPolicy& p);

/// Exit labels (every positive before exit) of each live session.
PerTask<std::uint8_t> session_labels(const SessionRecord& s);

/// Scores each live session at its enter time with fixed parameters.
std::vector<EvalRecord> evaluate_sessions(const ModelParams& params, const FeatureSource& features,
                                          std::span<const SessionRecord> sessions);

struct PolicyRun {
  ReportPolicy policy;
  ObjectiveMode mode = ObjectiveMode::kMoment;
  std::size_t samples = 0;
  std::optional<double> sample_volume_ratio;
  std::size_t steps = 0;
  double mean_loss = 0.0;
  LagResult lag;
  /// Progressive evaluation: each session scored by the snapshot preceding it.
  std::vector<TaskMetrics> metrics;
  std::map<ItemId, std::vector<SeriesPoint>> series;
  std::vector<LossRecord> trace;
};

/// Shared inputs of every policy run on one event log.
struct Experiment {
  SimResult sim;
  std::vector<SessionRecord> sessions;
  std::optional<HistoryStore> history;

  static Experiment prepare(const RunConfig& c);
};

PolicyRun run_policy(const Experiment& ex, const RunConfig& c, const ReportPolicy& policy);

struct ComparisonReport {
  std::string config_hash;
  std::size_t events = 0;
  std::size_t live_sessions = 0;
  std::vector<ConsistencyRow> consistency;
  std::vector<PolicyRun> runs;
  std::map<ItemId, std::vector<SeriesPoint>> truth;
};

ComparisonReport compare_policies(const RunConfig& c);
nlohmann::json to_json(const ComparisonReport& r);
/// report.json, consistency.csv, and per policy metrics/series/loss CSVs.
std::vector<std::filesystem::path> write_comparison(const ComparisonReport& r,
                                                    const std::filesystem::path& dir);

/// Human-readable summary of a report.json.
std::string format_report(const nlohmann::json& report);

}  // namespace streamrank
