#include "streamrank/sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "streamrank/rng.hpp"

namespace streamrank {

using nlohmann::json;

std::string_view to_string(RoomCategory c) {
  switch (c) {
    case RoomCategory::kTalentShow: return "talent_show";
    case RoomCategory::kGamePlay: return "game_play";
    default: return "other";
  }
}

RoomCategory parse_category(std::string_view s) {
  if (s == "talent_show") return RoomCategory::kTalentShow;
  if (s == "game_play") return RoomCategory::kGamePlay;
  if (s == "other") return RoomCategory::kOther;
  throw std::invalid_argument("unknown room category '" + std::string(s) + "'");
}

void RoomState::validate() const {
  auto fail = [&](const std::string& what) {
    throw ConfigError("room " + std::to_string(room_id) + ": " + what);
  };
  if (!(end_time > start_time)) fail("end_time must exceed start_time");
  if (!(base_attractiveness >= 0.0 && base_attractiveness <= 1.0)) {
    fail("base_attractiveness outside [0,1]");
  }
  Seconds prev_end = start_time;
  for (std::size_t i = 0; i < highlight_schedule.size(); ++i) {
    const auto& h = highlight_schedule[i];
    if (!(h.boost >= 0.0)) fail("negative highlight boost");
    if (!(h.end > h.start)) fail("empty highlight interval");
    if (h.start < start_time || h.end > end_time) fail("highlight outside room lifetime");
    if (i > 0 && h.start < prev_end) fail("highlights overlap or are unsorted");
    prev_end = h.end;
  }
}

double attractiveness(const RoomState& room, Seconds t) {
  if (t < room.start_time || t > room.end_time) {
    throw std::domain_error("attractiveness: t=" + std::to_string(t) +
                            " outside lifetime of room " +
                            std::to_string(room.room_id));
  }
  double a = room.base_attractiveness;
  // Highlights are sorted; find the last one starting at or before t.
  auto it = std::upper_bound(
      room.highlight_schedule.begin(), room.highlight_schedule.end(), t,
      [](Seconds v, const Highlight& h) { return v < h.start; });
  if (it != room.highlight_schedule.begin()) {
    const Highlight& h = *std::prev(it);
    if (t <= h.end) a += h.boost;
  }
  return std::clamp(a, 0.0, 1.0);
}

SimConfig SimConfig::defaults() {
  SimConfig c;
  c.behavior_delay[index(Task::kClick)] = {2.0, 15.0};
  c.behavior_delay[index(Task::kLike)] = {10.0, 240.0};
  c.behavior_delay[index(Task::kComment)] = {10.0, 250.0};
  c.behavior_delay[index(Task::kGift)] = {30.0, 420.0};
  c.sparsity[index(Task::kClick)] = 1.0;
  c.sparsity[index(Task::kLike)] = 0.3;
  c.sparsity[index(Task::kComment)] = 0.2;
  c.sparsity[index(Task::kGift)] = 0.06;
  return c;
}

void SimConfig::validate() const {
  for (double r : sparsity) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("sparsity rates must lie in [0,1]");
  }
  for (const auto& d : behavior_delay) {
    if (!(d.shift >= 0.0 && d.mean >= 0.0)) throw ConfigError("delays must be non-negative");
  }
  if (!(effective_view_threshold < long_view_threshold)) {
    throw ConfigError("effective_view_threshold must be below long_view_threshold");
  }
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(truth_interval > 0.0)) throw ConfigError("truth_interval must be positive");
  if (!(repeat_probability >= 0.0 && repeat_probability <= 1.0)) {
    throw ConfigError("repeat_probability must lie in [0,1]");
  }
  if (!(short_video_like_rate >= 0.0 && short_video_like_rate <= 1.0)) {
    throw ConfigError("short_video_like_rate must lie in [0,1]");
  }
  if (session_rate_per_user < 0.0 || short_video_rate_per_user < 0.0) {
    throw ConfigError("arrival rates must be non-negative");
  }
  if (highlights_min > highlights_max) throw ConfigError("highlights_min > highlights_max");
  if (base_attractiveness_min > base_attractiveness_max || base_attractiveness_min < 0.0 ||
      base_attractiveness_max > 1.0) {
    throw ConfigError("base attractiveness range must lie in [0,1]");
  }
  for (const auto& r : rooms) r.validate();
}

namespace {

std::vector<RoomState> generate_rooms(const SimConfig& c) {
  std::vector<RoomState> rooms;
  rooms.reserve(c.num_rooms);
  for (std::size_t i = 0; i < c.num_rooms; ++i) {
    Rng rng(derive_seed(c.seed, {0x100, i}));
    RoomState r;
    r.room_id = i + 1;
    r.author_id = i + 1;
    r.category = static_cast<RoomCategory>(rng.below(3));
    r.start_time = std::min(rng.uniform(0.0, c.room_start_max), c.horizon * 0.25);
    r.end_time = std::max(c.horizon - rng.uniform(0.0, c.room_end_slack), r.start_time + 1.0);
    r.end_time = std::min(r.end_time, c.horizon);
    r.base_attractiveness = rng.uniform(c.base_attractiveness_min, c.base_attractiveness_max);
    const std::size_t want =
        c.highlights_min + rng.below(c.highlights_max - c.highlights_min + 1);
    Seconds cursor = r.start_time + c.highlight_min_gap;
    for (std::size_t k = 0; k < want; ++k) {
      const Seconds onset = cursor + rng.uniform(0.0, c.highlight_min_gap);
      const Seconds dur = rng.uniform(c.highlight_duration_min, c.highlight_duration_max);
      const double boost = rng.uniform(c.boost_min, c.boost_max);
      if (onset + dur > r.end_time - c.highlight_min_gap * 0.5) break;
      r.highlight_schedule.push_back({onset, onset + dur, boost});
      cursor = onset + dur + c.highlight_min_gap;
    }
    rooms.push_back(std::move(r));
  }
  return rooms;
}

std::vector<ShortVideo> generate_videos(const SimConfig& c) {
  std::vector<ShortVideo> videos;
  videos.reserve(c.num_short_videos);
  const std::size_t authors = std::max<std::size_t>(c.num_video_authors, 1);
  for (std::size_t v = 0; v < c.num_short_videos; ++v) {
    Rng rng(derive_seed(c.seed, {0x200, v}));
    ShortVideo sv;
    sv.video_id = kShortVideoIdBase + v;
    sv.author_id = 1 + rng.below(authors);
    sv.tag = static_cast<std::uint32_t>(rng.below(std::max<std::uint32_t>(c.num_video_tags, 1)));
    videos.push_back(sv);
  }
  return videos;
}

/// Events of one session before id assignment; `order` breaks timestamp ties
/// within the session so the exit always sorts last.
struct PendingEvent {
  InteractionEvent event;
  std::uint32_t order = 0;
};

class SessionWriter {
 public:
  SessionWriter(std::vector<PendingEvent>& out, UserId user, ItemId item, Domain domain,
                SessionId session)
      : out_(out), user_(user), item_(item), domain_(domain), session_(session) {}

  void emit(BehaviorKind b, Seconds ts, std::optional<double> value = std::nullopt) {
    InteractionEvent e;
    e.user_id = user_;
    e.item_id = item_;
    e.domain = domain_;
    e.behavior = b;
    e.timestamp = ts;
    e.session_id = session_;
    e.value = value;
    out_.push_back({e, order_++});
  }

 private:
  std::vector<PendingEvent>& out_;
  UserId user_;
  ItemId item_;
  Domain domain_;
  SessionId session_;
  std::uint32_t order_ = 0;
};

constexpr std::array<Task, 4> kSampledTasks = {Task::kClick, Task::kLike, Task::kComment,
                                               Task::kGift};

void emit_live_session(const SimConfig& c, const RoomState& room, UserId user,
                       SessionId session, Seconds enter, std::optional<Seconds> forced_exit,
                       Rng& rng, std::vector<PendingEvent>& out) {
  // Draw order is fixed regardless of outcomes so that paired runs which
  // differ only in attractiveness consume identical random streams.
  const Seconds drawn_duration =
      c.watch_duration.shift + rng.exponential(c.watch_duration.mean);
  Seconds exit = forced_exit ? *forced_exit : std::min(enter + drawn_duration, room.end_time);
  exit = std::max(exit, enter);
  const double a = attractiveness(room, enter);

  SessionWriter w(out, user, room.room_id, Domain::kLive, session);
  w.emit(BehaviorKind::kImpression, enter);

  const Seconds watched = exit - enter;
  if (watched >= c.effective_view_threshold) {
    w.emit(BehaviorKind::kEffectiveView, enter + c.effective_view_threshold);
  }
  if (watched >= c.long_view_threshold) {
    w.emit(BehaviorKind::kLongView, enter + c.long_view_threshold);
  }

  for (Task task : kSampledTasks) {
    const auto& delay = c.behavior_delay[index(task)];
    const double u = rng.uniform();
    const Seconds first = enter + delay.shift + rng.exponential(delay.mean);
    const bool repeats = task != Task::kClick;
    std::array<double, 8> rep_u{};
    std::array<Seconds, 8> rep_gap{};
    const std::size_t nrep = repeats ? std::min<std::size_t>(c.max_repeats, rep_u.size()) : 0;
    for (std::size_t r = 0; r < nrep; ++r) {
      rep_u[r] = rng.uniform();
      rep_gap[r] = rng.exponential(c.repeat_gap_mean);
    }
    const double price = c.gift_price_mean > 0.0 ? 1.0 + rng.exponential(c.gift_price_mean - 1.0) : 1.0;
    if (!(u < c.sparsity[index(task)] * a)) continue;
    if (first > exit) continue;
    auto value_for = [&](Task t) -> std::optional<double> {
      if (t == Task::kGift) return std::round(price * 100.0) / 100.0;
      return std::nullopt;
    };
    w.emit(task_behavior(task), first, value_for(task));
    Seconds t = first;
    for (std::size_t r = 0; r < nrep; ++r) {
      if (!(rep_u[r] < c.repeat_probability)) break;
      t += rep_gap[r];
      if (t > exit) break;
      w.emit(task_behavior(task), t, value_for(task));
    }
  }
  w.emit(BehaviorKind::kExit, exit);
}

void emit_video_session(const SimConfig& c, const ShortVideo& video, UserId user,
                        SessionId session, Seconds enter, Rng& rng,
                        std::vector<PendingEvent>& out) {
  const Seconds dur =
      c.short_video_duration.shift + rng.exponential(c.short_video_duration.mean);
  const double u_like = rng.uniform();
  const double like_frac = rng.uniform();
  const Seconds exit = std::min(enter + dur, c.horizon);
  SessionWriter w(out, user, video.video_id, Domain::kShortVideo, session);
  w.emit(BehaviorKind::kImpression, enter);
  if (exit - enter >= c.short_video_long_view_threshold) {
    w.emit(BehaviorKind::kLongView, enter + c.short_video_long_view_threshold);
  }
  if (u_like < c.short_video_like_rate) {
    w.emit(BehaviorKind::kLike, enter + like_frac * (exit - enter));
  }
  w.emit(BehaviorKind::kExit, exit);
}

}  // namespace

SimResult simulate(const SimConfig& config) {
  config.validate();
  SimResult result;
  result.rooms = config.rooms.empty() ? generate_rooms(config) : config.rooms;
  for (const auto& r : result.rooms) r.validate();
  result.videos = generate_videos(config);

  std::vector<PendingEvent> pending;
  SessionId next_session = 1;

  if (!config.scripted_sessions.empty()) {
    for (std::size_t i = 0; i < config.scripted_sessions.size(); ++i) {
      const auto& s = config.scripted_sessions[i];
      auto it = std::find_if(result.rooms.begin(), result.rooms.end(),
                             [&](const RoomState& r) { return r.room_id == s.room_id; });
      if (it == result.rooms.end()) {
        throw ConfigError("scripted session references unknown room " +
                          std::to_string(s.room_id));
      }
      if (s.exit < s.enter) throw ConfigError("scripted session exits before it enters");
      Rng rng(derive_seed(config.seed, {0x300, s.user_id, i}));
      emit_live_session(config, *it, s.user_id, next_session++, s.enter, s.exit, rng, pending);
    }
  } else if (!result.rooms.empty() && config.session_rate_per_user > 0.0) {
    const double mean_gap = 1.0 / config.session_rate_per_user;
    for (UserId u = 1; u <= config.num_users; ++u) {
      Rng arrivals(derive_seed(config.seed, {0x400, u}));
      Seconds t = 0.0;
      std::vector<const RoomState*> alive;
      for (std::uint64_t k = 0;; ++k) {
        t += arrivals.exponential(mean_gap);
        const double pick = arrivals.uniform();
        if (t >= config.horizon) break;
        alive.clear();
        for (const auto& r : result.rooms) {
          if (r.start_time <= t && t < r.end_time) alive.push_back(&r);
        }
        if (alive.empty()) continue;
        const RoomState& room =
            *alive[std::min(alive.size() - 1, static_cast<std::size_t>(pick * alive.size()))];
        Rng rng(derive_seed(config.seed, {0x500, u, k}));
        emit_live_session(config, room, u, next_session++, t, std::nullopt, rng, pending);
      }
    }
  }

  if (!result.videos.empty() && config.short_video_rate_per_user > 0.0 &&
      config.scripted_sessions.empty()) {
    const double mean_gap = 1.0 / config.short_video_rate_per_user;
    for (UserId u = 1; u <= config.num_users; ++u) {
      Rng arrivals(derive_seed(config.seed, {0x600, u}));
      Seconds t = 0.0;
      for (std::uint64_t k = 0;; ++k) {
        t += arrivals.exponential(mean_gap);
        const double pick = arrivals.uniform();
        if (t >= config.horizon) break;
        const auto& video = result.videos[std::min(
            result.videos.size() - 1, static_cast<std::size_t>(pick * result.videos.size()))];
        Rng rng(derive_seed(config.seed, {0x700, u, k}));
        emit_video_session(config, video, u, next_session++, t, rng, pending);
      }
    }
  }

  std::stable_sort(pending.begin(), pending.end(),
                   [](const PendingEvent& a, const PendingEvent& b) {
                     if (a.event.timestamp != b.event.timestamp) {
                       return a.event.timestamp < b.event.timestamp;
                     }
                     if (a.event.session_id != b.event.session_id) {
                       return a.event.session_id < b.event.session_id;
                     }
                     return a.order < b.order;
                   });
  result.events.reserve(pending.size());
  EventId next_event = 1;
  for (auto& p : pending) {
    p.event.event_id = next_event++;
    result.events.push_back(p.event);
  }

  for (const auto& r : result.rooms) {
    const auto first = static_cast<std::int64_t>(std::ceil(r.start_time / config.truth_interval));
    for (std::int64_t k = first;; ++k) {
      const Seconds t = static_cast<double>(k) * config.truth_interval;
      if (t > r.end_time) break;
      result.truth.push_back({r.room_id, t, attractiveness(r, t)});
    }
  }
  return result;
}

std::vector<CtrPoint> empirical_ctr(std::span<const InteractionEvent> events, ItemId room_id,
                                    Seconds window) {
  if (!(window > 0.0)) throw std::invalid_argument("empirical_ctr: window must be positive");
  std::unordered_map<SessionId, std::size_t> session_window;
  std::vector<std::size_t> impressions;
  std::vector<std::size_t> clicks;
  auto grow = [&](std::size_t w) {
    if (w >= impressions.size()) {
      impressions.resize(w + 1, 0);
      clicks.resize(w + 1, 0);
    }
  };
  for (const auto& e : events) {
    if (e.domain != Domain::kLive || e.item_id != room_id) continue;
    const auto w = static_cast<std::size_t>(std::floor(std::max(0.0, e.timestamp) / window));
    if (e.behavior == BehaviorKind::kImpression) {
      grow(w);
      ++impressions[w];
      session_window[e.session_id] = w;
    } else if (e.behavior == BehaviorKind::kClick) {
      auto it = session_window.find(e.session_id);
      if (it == session_window.end()) continue;
      ++clicks[it->second];
      session_window.erase(it);  // one click per impression
    }
  }
  std::vector<CtrPoint> series(impressions.size());
  for (std::size_t w = 0; w < impressions.size(); ++w) {
    series[w].window_start = static_cast<double>(w) * window;
    if (impressions[w] > 0) {
      series[w].ctr = static_cast<double>(clicks[w]) / static_cast<double>(impressions[w]);
    }
  }
  return series;
}

std::vector<SessionRecord> group_sessions(std::span<const InteractionEvent> events) {
  std::vector<SessionRecord> sessions;
  std::unordered_map<SessionId, std::size_t> slot;
  for (const auto& e : events) {
    auto [it, inserted] = slot.try_emplace(e.session_id, sessions.size());
    if (inserted) {
      SessionRecord s;
      s.session_id = e.session_id;
      s.user_id = e.user_id;
      s.room_id = e.item_id;
      s.domain = e.domain;
      sessions.push_back(std::move(s));
    }
    sessions[it->second].events.push_back(e);
  }
  auto malformed = [](SessionId id, const std::string& what) {
    throw MalformedLogError("session " + std::to_string(id) + ": " + what);
  };
  for (auto& s : sessions) {
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const InteractionEvent& a, const InteractionEvent& b) {
                       if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                       return a.event_id < b.event_id;
                     });
    const InteractionEvent* impression = nullptr;
    const InteractionEvent* exit = nullptr;
    for (const auto& e : s.events) {
      if (e.user_id != s.user_id || e.item_id != s.room_id) {
        malformed(s.session_id, "events disagree on user or item");
      }
      if (e.behavior == BehaviorKind::kImpression) {
        if (impression) malformed(s.session_id, "more than one impression");
        impression = &e;
      } else if (e.behavior == BehaviorKind::kExit) {
        if (exit) malformed(s.session_id, "more than one exit");
        exit = &e;
      }
    }
    if (!impression) malformed(s.session_id, "missing impression");
    if (!exit) malformed(s.session_id, "missing exit");
    s.enter = impression->timestamp;
    s.exit = exit->timestamp;
    for (const auto& e : s.events) {
      if (e.timestamp < s.enter || e.timestamp > s.exit) {
        malformed(s.session_id, "event " + std::to_string(e.event_id) +
                                    " outside session bounds");
      }
    }
    if (s.events.back().behavior != BehaviorKind::kExit) {
      malformed(s.session_id, "exit is not the last event");
    }
  }
  return sessions;
}

json to_json(const InteractionEvent& e) {
  json j;
  j["event_id"] = e.event_id;
  j["user_id"] = e.user_id;
  j["item_id"] = e.item_id;
  j["domain"] = to_string(e.domain);
  j["behavior"] = to_string(e.behavior);
  j["ts"] = e.timestamp;
  j["session_id"] = e.session_id;
  j["value"] = e.value ? json(*e.value) : json(nullptr);
  return j;
}

InteractionEvent event_from_json(const json& j) {
  InteractionEvent e;
  e.event_id = j.at("event_id").get<EventId>();
  e.user_id = j.at("user_id").get<UserId>();
  e.item_id = j.at("item_id").get<ItemId>();
  e.domain = parse_domain(j.at("domain").get<std::string>());
  e.behavior = parse_behavior(j.at("behavior").get<std::string>());
  e.timestamp = j.at("ts").get<double>();
  e.session_id = j.at("session_id").get<SessionId>();
  if (j.contains("value") && !j.at("value").is_null()) e.value = j.at("value").get<double>();
  if (e.value.has_value() != (e.behavior == BehaviorKind::kGift)) {
    throw std::invalid_argument("value must be present exactly for gift events");
  }
  return e;
}

void write_events_jsonl(std::ostream& os, std::span<const InteractionEvent> events) {
  for (const auto& e : events) os << to_json(e).dump() << '\n';
}

std::vector<InteractionEvent> read_events_jsonl(std::istream& is) {
  std::vector<InteractionEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      events.push_back(event_from_json(json::parse(line)));
    } catch (const std::exception& ex) {
      throw MalformedLogError("line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return events;
}

void write_truth_csv(std::ostream& os, std::span<const TruthPoint> truth) {
  os << "room_id,t,attractiveness\n";
  for (const auto& p : truth) {
    os << p.room_id << ',' << json(p.t).dump() << ',' << json(p.attractiveness).dump() << '\n';
  }
}

std::vector<TruthPoint> read_truth_csv(std::istream& is) {
  std::vector<TruthPoint> out;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    out.push_back({std::stoull(a), std::stod(b), std::stod(c)});
  }
  return out;
}

json to_json(const RoomState& r) {
  json hs = json::array();
  for (const auto& h : r.highlight_schedule) {
    hs.push_back({{"start", h.start}, {"end", h.end}, {"boost", h.boost}});
  }
  return {{"room_id", r.room_id},
          {"author_id", r.author_id},
          {"category", to_string(r.category)},
          {"start_time", r.start_time},
          {"end_time", r.end_time},
          {"base_attractiveness", r.base_attractiveness},
          {"highlights", hs}};
}

RoomState room_from_json(const json& j) {
  RoomState r;
  r.room_id = j.at("room_id").get<ItemId>();
  r.author_id = j.value("author_id", r.room_id);
  r.category = parse_category(j.value("category", std::string("other")));
  r.start_time = j.at("start_time").get<double>();
  r.end_time = j.at("end_time").get<double>();
  r.base_attractiveness = j.at("base_attractiveness").get<double>();
  if (j.contains("highlights")) {
    for (const auto& h : j.at("highlights")) {
      r.highlight_schedule.push_back(
          {h.at("start").get<double>(), h.at("end").get<double>(), h.at("boost").get<double>()});
    }
  }
  return r;
}

json catalog_to_json(std::span<const RoomState> rooms, std::span<const ShortVideo> videos) {
  json rs = json::array();
  for (const auto& r : rooms) rs.push_back(to_json(r));
  json vs = json::array();
  for (const auto& v : videos) {
    vs.push_back({{"video_id", v.video_id}, {"author_id", v.author_id}, {"tag", v.tag}});
  }
  return {{"rooms", rs}, {"videos", vs}};
}

void catalog_from_json(const json& j, std::vector<RoomState>& rooms,
                       std::vector<ShortVideo>& videos) {
  rooms.clear();
  videos.clear();
  for (const auto& r : j.at("rooms")) rooms.push_back(room_from_json(r));
  if (j.contains("videos")) {
    for (const auto& v : j.at("videos")) {
      videos.push_back({v.at("video_id").get<ItemId>(), v.at("author_id").get<AuthorId>(),
                        v.value("tag", 0u)});
    }
  }
}

namespace {

json delay_json(const DelayDistribution& d) { return {{"shift", d.shift}, {"mean", d.mean}}; }

DelayDistribution delay_from(const json& j, DelayDistribution def) {
  def.shift = j.value("shift", def.shift);
  def.mean = j.value("mean", def.mean);
  return def;
}

}  // namespace

json to_json(const SimConfig& c) {
  json delays = json::object();
  json rates = json::object();
  for (Task t : kAllTasks) {
    delays[std::string(to_string(t))] = delay_json(c.behavior_delay[index(t)]);
    rates[std::string(to_string(t))] = c.sparsity[index(t)];
  }
  json rooms = json::array();
  for (const auto& r : c.rooms) rooms.push_back(to_json(r));
  json scripted = json::array();
  for (const auto& s : c.scripted_sessions) {
    scripted.push_back(
        {{"user_id", s.user_id}, {"room_id", s.room_id}, {"enter", s.enter}, {"exit", s.exit}});
  }
  return {
      {"num_users", c.num_users},
      {"num_rooms", c.num_rooms},
      {"num_short_videos", c.num_short_videos},
      {"horizon", c.horizon},
      {"seed", c.seed},
      {"behavior_delay", delays},
      {"sparsity", rates},
      {"effective_view_threshold", c.effective_view_threshold},
      {"long_view_threshold", c.long_view_threshold},
      {"repeat_probability", c.repeat_probability},
      {"repeat_gap_mean", c.repeat_gap_mean},
      {"max_repeats", c.max_repeats},
      {"gift_price_mean", c.gift_price_mean},
      {"session_rate_per_user", c.session_rate_per_user},
      {"watch_duration", delay_json(c.watch_duration)},
      {"short_video_rate_per_user", c.short_video_rate_per_user},
      {"short_video_duration", delay_json(c.short_video_duration)},
      {"short_video_long_view_threshold", c.short_video_long_view_threshold},
      {"short_video_like_rate", c.short_video_like_rate},
      {"num_video_authors", c.num_video_authors},
      {"num_video_tags", c.num_video_tags},
      {"base_attractiveness_min", c.base_attractiveness_min},
      {"base_attractiveness_max", c.base_attractiveness_max},
      {"room_start_max", c.room_start_max},
      {"room_end_slack", c.room_end_slack},
      {"highlights_min", c.highlights_min},
      {"highlights_max", c.highlights_max},
      {"highlight_duration_min", c.highlight_duration_min},
      {"highlight_duration_max", c.highlight_duration_max},
      {"boost_min", c.boost_min},
      {"boost_max", c.boost_max},
      {"highlight_min_gap", c.highlight_min_gap},
      {"truth_interval", c.truth_interval},
      {"rooms", rooms},
      {"scripted_sessions", scripted},
  };
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig c = SimConfig::defaults();
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("num_users", c.num_users);
  get("num_rooms", c.num_rooms);
  get("num_short_videos", c.num_short_videos);
  get("horizon", c.horizon);
  get("seed", c.seed);
  if (j.contains("behavior_delay")) {
    for (const auto& [k, v] : j.at("behavior_delay").items()) {
      auto t = parse_task(k);
      c.behavior_delay[index(t)] = delay_from(v, c.behavior_delay[index(t)]);
    }
  }
  if (j.contains("sparsity")) {
    for (const auto& [k, v] : j.at("sparsity").items()) {
      c.sparsity[index(parse_task(k))] = v.get<double>();
    }
  }
  get("effective_view_threshold", c.effective_view_threshold);
  get("long_view_threshold", c.long_view_threshold);
  get("repeat_probability", c.repeat_probability);
  get("repeat_gap_mean", c.repeat_gap_mean);
  get("max_repeats", c.max_repeats);
  get("gift_price_mean", c.gift_price_mean);
  get("session_rate_per_user", c.session_rate_per_user);
  if (j.contains("watch_duration")) c.watch_duration = delay_from(j.at("watch_duration"), c.watch_duration);
  get("short_video_rate_per_user", c.short_video_rate_per_user);
  if (j.contains("short_video_duration")) {
    c.short_video_duration = delay_from(j.at("short_video_duration"), c.short_video_duration);
  }
  get("short_video_long_view_threshold", c.short_video_long_view_threshold);
  get("short_video_like_rate", c.short_video_like_rate);
  get("num_video_authors", c.num_video_authors);
  get("num_video_tags", c.num_video_tags);
  get("base_attractiveness_min", c.base_attractiveness_min);
  get("base_attractiveness_max", c.base_attractiveness_max);
  get("room_start_max", c.room_start_max);
  get("room_end_slack", c.room_end_slack);
  get("highlights_min", c.highlights_min);
  get("highlights_max", c.highlights_max);
  get("highlight_duration_min", c.highlight_duration_min);
  get("highlight_duration_max", c.highlight_duration_max);
  get("boost_min", c.boost_min);
  get("boost_max", c.boost_max);
  get("highlight_min_gap", c.highlight_min_gap);
  get("truth_interval", c.truth_interval);
  if (j.contains("rooms")) {
    c.rooms.clear();
    for (const auto& r : j.at("rooms")) c.rooms.push_back(room_from_json(r));
  }
  if (j.contains("scripted_sessions")) {
    c.scripted_sessions.clear();
    for (const auto& s : j.at("scripted_sessions")) {
      c.scripted_sessions.push_back({s.at("user_id").get<UserId>(), s.at("room_id").get<ItemId>(),
                                     s.at("enter").get<double>(), s.at("exit").get<double>()});
    }
  }
  return c;
}

}  // namespace streamrank
