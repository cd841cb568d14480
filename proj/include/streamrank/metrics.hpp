#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamrank/labels.hpp"
#include "streamrank/losses.hpp"
#include "streamrank/sim.hpp"
#include "streamrank/trainer.hpp"

namespace streamrank {

struct ScoredExample {
  UserId user_id = 0;
  double score = 0.0;
  std::uint8_t label = 0;
  Task task = Task::kClick;
};

/// Rank-statistic AUC, ties counted 1/2. nullopt unless both classes occur.
/// Throws std::invalid_argument on a non-finite score.
std::optional<double> auc(std::span<const ScoredExample> examples);

/// Example-count-weighted mean of per-user AUC over users with both classes.
std::optional<double> gauc(std::span<const ScoredExample> examples);

struct ConsistencyRow {
  Task task = Task::kClick;
  std::size_t fast_positive_count = 0;
  std::size_t slow_window_positive_count = 0;
  /// fast / slow; nullopt when the slow-window count is zero.
  std::optional<double> consistency;
};

/// Per task: the fraction of slow-window positives already present in the
/// fast samples.
std::vector<ConsistencyRow> consistency_table(std::span<const TrainingSample> fast_samples,
                                              const PerTask<std::size_t>& slow_window_counts);

/// Convenience over sessions: assembles the fast window itself.
std::vector<ConsistencyRow> consistency_table(std::span<const SessionRecord> sessions,
                                              Seconds fast_window, Seconds slow_window);

struct LagConfig {
  double k = 2.0;
  Seconds baseline_window = 300.0;
  /// Lower bound on the baseline standard deviation so a perfectly flat
  /// baseline still needs a real rise to trigger.
  double std_floor = 1e-3;
};

struct OnsetLag {
  Seconds onset = 0.0;
  Seconds lag = 0.0;
  bool detected = false;
};

struct LagResult {
  double mean_lag = 0.0;
  std::vector<OnsetLag> onsets;
};

/// For each onset, the first grid time t >= onset where the predicted series
/// exceeds mean + k * max(std, std_floor) of its values in
/// [onset - baseline_window, onset), minus the onset. Undetected onsets cost
/// (series end - onset). `truth`, when non-empty, must share the grid.
/// Throws std::invalid_argument on an empty series or no onsets.
LagResult detection_lag(std::span<const SeriesPoint> predicted, std::span<const SeriesPoint> truth,
                        std::span<const Seconds> onsets, const LagConfig& config = {});

/// One held-out session scored before it happened.
struct EvalRecord {
  UserId user_id = 0;
  ItemId item_id = 0;
  SessionId session_id = 0;
  Prediction prediction;
  PerTask<std::uint8_t> labels{};
};

struct TaskMetrics {
  Task task = Task::kClick;
  std::size_t examples = 0;
  std::size_t positives = 0;
  std::optional<double> auc;
  std::optional<double> gauc;
  double mean_prediction = 0.0;
  /// mean prediction / empirical rate: the interaction-beyond diagnostic.
  std::optional<double> calibration_ratio;
};

std::vector<ScoredExample> scored_examples(std::span<const EvalRecord> records, Task task);
std::vector<TaskMetrics> task_metrics(std::span<const EvalRecord> records);

/// Writes `null` for an empty optional.
nlohmann::json opt_json(const std::optional<double>& v);

nlohmann::json to_json(const ConsistencyRow& r);
nlohmann::json to_json(const TaskMetrics& m);
nlohmann::json to_json(const LagResult& r);

void write_consistency_csv(std::ostream& os, std::span<const ConsistencyRow> rows);
void write_task_metrics_csv(std::ostream& os, std::span<const TaskMetrics> rows);
void write_series_csv(std::ostream& os, std::span<const SeriesPoint> predicted,
                      std::span<const SeriesPoint> truth);

}  // namespace streamrank
