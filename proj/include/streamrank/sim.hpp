#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "streamrank/types.hpp"

namespace streamrank {

enum class RoomCategory : std::uint8_t { kTalentShow, kGamePlay, kOther };

std::string_view to_string(RoomCategory c);
RoomCategory parse_category(std::string_view s);

/// A window during which the room's attractiveness is raised additively.
struct Highlight {
  Seconds start = 0.0;
  Seconds end = 0.0;
  double boost = 0.0;
};

struct RoomState {
  ItemId room_id = 0;
  AuthorId author_id = 0;
  RoomCategory category = RoomCategory::kOther;
  Seconds start_time = 0.0;
  Seconds end_time = 0.0;
  /// Sorted, disjoint, and contained in [start_time, end_time].
  std::vector<Highlight> highlight_schedule;
  double base_attractiveness = 0.0;

  /// Throws ConfigError if any invariant is violated.
  void validate() const;
};

/// Latent attractiveness in [0, 1]: base plus the boost of the covering
/// highlight, clamped. Throws std::domain_error outside the room lifetime.
double attractiveness(const RoomState& room, Seconds t);

struct ShortVideo {
  ItemId video_id = 0;
  AuthorId author_id = 0;
  std::uint32_t tag = 0;
};

struct InteractionEvent {
  EventId event_id = 0;
  UserId user_id = 0;
  ItemId item_id = 0;
  Domain domain = Domain::kLive;
  BehaviorKind behavior = BehaviorKind::kImpression;
  Seconds timestamp = 0.0;
  SessionId session_id = 0;
  /// Gift price; present iff behavior == gift.
  std::optional<double> value;

  bool operator==(const InteractionEvent&) const = default;
};

struct SessionRecord {
  SessionId session_id = 0;
  UserId user_id = 0;
  ItemId room_id = 0;
  Domain domain = Domain::kLive;
  Seconds enter = 0.0;
  Seconds exit = 0.0;
  std::vector<InteractionEvent> events;
};

/// Shifted exponential: shift + Exp(mean).
struct DelayDistribution {
  Seconds shift = 0.0;
  Seconds mean = 0.0;
};

/// A forced session that bypasses the random arrival process.
struct ScriptedSession {
  UserId user_id = 0;
  ItemId room_id = 0;
  Seconds enter = 0.0;
  Seconds exit = 0.0;
};

struct SimConfig {
  std::size_t num_users = 2000;
  std::size_t num_rooms = 20;
  std::size_t num_short_videos = 2000;
  Seconds horizon = 6 * 3600.0;
  std::uint64_t seed = 7;

  /// Delay of the first occurrence after enter. Only the sampled tasks
  /// (click, like, comment, gift) are read; view tasks come from watch time.
  PerTask<DelayDistribution> behavior_delay{};
  /// Base rates per task, multiplied by attractiveness at enter time.
  PerTask<double> sparsity{};
  Seconds effective_view_threshold = 20.0;
  Seconds long_view_threshold = 120.0;

  /// Repeat occurrences of like/comment/gift after the first.
  double repeat_probability = 0.5;
  Seconds repeat_gap_mean = 120.0;
  std::size_t max_repeats = 3;
  double gift_price_mean = 10.0;

  /// Live impressions per user per second.
  double session_rate_per_user = 0.03;
  DelayDistribution watch_duration{60.0, 900.0};

  double short_video_rate_per_user = 1.0 / 900.0;
  DelayDistribution short_video_duration{3.0, 40.0};
  Seconds short_video_long_view_threshold = 30.0;
  double short_video_like_rate = 0.1;
  std::size_t num_video_authors = 60;
  std::uint32_t num_video_tags = 8;

  // Room generation.
  double base_attractiveness_min = 0.15;
  double base_attractiveness_max = 0.35;
  Seconds room_start_max = 1800.0;
  Seconds room_end_slack = 1800.0;
  std::size_t highlights_min = 2;
  std::size_t highlights_max = 4;
  Seconds highlight_duration_min = 600.0;
  Seconds highlight_duration_max = 1200.0;
  double boost_min = 0.3;
  double boost_max = 0.5;
  /// Quiet time required before every highlight onset.
  Seconds highlight_min_gap = 900.0;

  /// Grid spacing of the ground-truth attractiveness series.
  Seconds truth_interval = 30.0;

  /// When non-empty, used verbatim instead of generated rooms.
  std::vector<RoomState> rooms;
  /// When non-empty, replaces the random live arrival process.
  std::vector<ScriptedSession> scripted_sessions;

  /// Defaults calibrated so that sparser behaviors arrive later.
  static SimConfig defaults();
  void validate() const;
};

struct TruthPoint {
  ItemId room_id = 0;
  Seconds t = 0.0;
  double attractiveness = 0.0;
};

struct SimResult {
  std::vector<InteractionEvent> events;
  std::vector<TruthPoint> truth;
  std::vector<RoomState> rooms;
  std::vector<ShortVideo> videos;
};

inline constexpr ItemId kShortVideoIdBase = 1'000'000;

/// Deterministic discrete-event generation of live and short-video sessions.
/// The returned log is sorted by timestamp with event ids increasing along it.
SimResult simulate(const SimConfig& config);

/// Per-window click-through rate of one room. Clicks are attributed to the
/// window of their session's impression, so every value lies in [0, 1].
/// Windows without impressions are std::nullopt.
struct CtrPoint {
  Seconds window_start = 0.0;
  std::optional<double> ctr;
};
std::vector<CtrPoint> empirical_ctr(std::span<const InteractionEvent> events,
                                    ItemId room_id, Seconds window);

/// Groups a timestamp-sorted log into sessions. Throws MalformedLogError for a
/// session without impression or exit, or with events outside its bounds.
std::vector<SessionRecord> group_sessions(std::span<const InteractionEvent> events);

// Serialization.
nlohmann::json to_json(const InteractionEvent& e);
InteractionEvent event_from_json(const nlohmann::json& j);
void write_events_jsonl(std::ostream& os, std::span<const InteractionEvent> events);
/// Throws MalformedLogError naming the 1-based line number on bad input.
std::vector<InteractionEvent> read_events_jsonl(std::istream& is);
void write_truth_csv(std::ostream& os, std::span<const TruthPoint> truth);
std::vector<TruthPoint> read_truth_csv(std::istream& is);

nlohmann::json to_json(const RoomState& r);
RoomState room_from_json(const nlohmann::json& j);
nlohmann::json catalog_to_json(std::span<const RoomState> rooms,
                               std::span<const ShortVideo> videos);
void catalog_from_json(const nlohmann::json& j, std::vector<RoomState>& rooms,
                       std::vector<ShortVideo>& videos);

nlohmann::json to_json(const SimConfig& c);
/// Missing keys keep their default values.
SimConfig sim_config_from_json(const nlohmann::json& j);

}  // namespace streamrank
