#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamrank/sim.hpp"
#include "streamrank/types.hpp"

namespace streamrank {

enum class ReportKind : std::uint8_t { kExitReport, kFastSlow, kRealtime };

struct ReportPolicy {
  ReportKind kind = ReportKind::kRealtime;
  Seconds fast_window = 300.0;
  Seconds slow_window = 3600.0;
  Seconds tick = 30.0;
  /// Realtime only: positives later than enter + cap are never reported.
  /// Unset means uncapped.
  std::optional<Seconds> realtime_cap;

  static ReportPolicy exit_report() { return {ReportKind::kExitReport, 300.0, 3600.0, 30.0, std::nullopt}; }
  static ReportPolicy fast_slow(Seconds fast = 300.0, Seconds slow = 3600.0) {
    return {ReportKind::kFastSlow, fast, slow, 30.0, std::nullopt};
  }
  static ReportPolicy realtime(Seconds tick = 30.0) {
    return {ReportKind::kRealtime, 300.0, 3600.0, tick, std::nullopt};
  }

  void validate() const;
};

std::string_view to_string(ReportKind k);
ReportKind parse_report_kind(std::string_view s);

enum class Flow : std::uint8_t { kExit, kFast, kSlow, kRtFirst, kRtExit };

std::string_view to_string(Flow f);
Flow parse_flow(std::string_view s);

struct TrainingSample {
  UserId user_id = 0;
  ItemId item_id = 0;
  SessionId session_id = 0;
  Seconds report_ts = 0.0;
  Flow flow = Flow::kExit;
  PerTask<std::uint8_t> labels{};
  /// true = learn, false = ignore.
  PerTask<bool> learn{};
  /// Feature materialization handle: features (including history snapshots)
  /// are read as of the session's enter time.
  Seconds as_of = 0.0;

  bool operator==(const TrainingSample&) const = default;
};

/// Per-session first-positive bookkeeping of the realtime engine.
class LabelLedger {
 public:
  /// Records a positive occurrence; only the earliest one is kept.
  void observe(Task task, Seconds ts);
  /// Marks the task as reported. Throws std::logic_error on a second report.
  void mark_reported(Task task);

  const std::optional<Seconds>& first_positive(Task task) const {
    return first_[index(task)];
  }
  bool reported(Task task) const { return reported_[index(task)]; }

 private:
  PerTask<std::optional<Seconds>> first_{};
  PerTask<bool> reported_{};
};

/// Earliest positive timestamp per task in one session; repeats are dropped.
PerTask<std::optional<Seconds>> first_only_filter(std::span<const InteractionEvent> session_events);

/// Converts a timestamp-sorted event log into training samples under the given
/// report policy. Only live sessions are assembled. The output is sorted by
/// report_ts (ties: session id, then emission order). Throws MalformedLogError.
std::vector<TrainingSample> assemble(std::span<const InteractionEvent> events,
                                     const ReportPolicy& policy);

/// Same, over pre-grouped sessions.
std::vector<TrainingSample> assemble_sessions(std::span<const SessionRecord> sessions,
                                              const ReportPolicy& policy);

/// |a| / |b|. Throws std::invalid_argument when b is empty.
double sample_volume_ratio(std::span<const TrainingSample> a, std::span<const TrainingSample> b);

/// Per task, the number of live sessions whose first positive falls before
/// min(enter + slow_window, exit): the positives a fast-slow engine can ever see.
PerTask<std::size_t> slow_window_positive_counts(std::span<const SessionRecord> sessions,
                                                 Seconds slow_window);

nlohmann::json to_json(const TrainingSample& s);
TrainingSample sample_from_json(const nlohmann::json& j);
void write_samples_jsonl(std::ostream& os, std::span<const TrainingSample> samples);
std::vector<TrainingSample> read_samples_jsonl(std::istream& is);

nlohmann::json to_json(const ReportPolicy& p);
ReportPolicy report_policy_from_json(const nlohmann::json& j);

}  // namespace streamrank
