#include "streamrank/labels.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace streamrank {

using nlohmann::json;

void ReportPolicy::validate() const {
  if (kind == ReportKind::kFastSlow && !(fast_window > 0.0 && fast_window < slow_window)) {
    throw ConfigError("fast_slow policy requires 0 < fast_window < slow_window");
  }
  if (kind == ReportKind::kRealtime) {
    if (!(tick > 0.0)) throw ConfigError("realtime policy requires tick > 0");
    if (tick > fast_window) throw ConfigError("realtime tick must not exceed fast_window");
    if (realtime_cap && !(*realtime_cap > 0.0)) throw ConfigError("realtime cap must be positive");
  }
}

std::string_view to_string(ReportKind k) {
  switch (k) {
    case ReportKind::kExitReport: return "exit";
    case ReportKind::kFastSlow: return "fast_slow";
    default: return "realtime";
  }
}

ReportKind parse_report_kind(std::string_view s) {
  if (s == "exit" || s == "exit_report") return ReportKind::kExitReport;
  if (s == "fast_slow") return ReportKind::kFastSlow;
  if (s == "realtime") return ReportKind::kRealtime;
  throw std::invalid_argument("unknown report policy '" + std::string(s) + "'");
}

std::string_view to_string(Flow f) {
  switch (f) {
    case Flow::kExit: return "exit";
    case Flow::kFast: return "fast";
    case Flow::kSlow: return "slow";
    case Flow::kRtFirst: return "rt_first";
    default: return "rt_exit";
  }
}

Flow parse_flow(std::string_view s) {
  if (s == "exit") return Flow::kExit;
  if (s == "fast") return Flow::kFast;
  if (s == "slow") return Flow::kSlow;
  if (s == "rt_first") return Flow::kRtFirst;
  if (s == "rt_exit") return Flow::kRtExit;
  throw std::invalid_argument("unknown flow '" + std::string(s) + "'");
}

void LabelLedger::observe(Task task, Seconds ts) {
  auto& slot = first_[index(task)];
  if (!slot || ts < *slot) {
    if (slot) throw std::logic_error("LabelLedger: positives must be observed in time order");
    slot = ts;
  }
}

void LabelLedger::mark_reported(Task task) {
  if (reported_[index(task)]) {
    throw std::logic_error("LabelLedger: task " + std::string(to_string(task)) +
                           " reported twice");
  }
  reported_[index(task)] = true;
}

PerTask<std::optional<Seconds>> first_only_filter(std::span<const InteractionEvent> events) {
  PerTask<std::optional<Seconds>> first{};
  for (const auto& e : events) {
    Task t;
    if (!behavior_task(e.behavior, t)) continue;
    auto& slot = first[index(t)];
    if (!slot || e.timestamp < *slot) slot = e.timestamp;
  }
  return first;
}

namespace {

TrainingSample base_sample(const SessionRecord& s, Seconds ts, Flow flow) {
  TrainingSample out;
  out.user_id = s.user_id;
  out.item_id = s.room_id;
  out.session_id = s.session_id;
  out.report_ts = ts;
  out.flow = flow;
  out.as_of = s.enter;
  return out;
}

void emit_exit_report(const SessionRecord& s, const PerTask<std::optional<Seconds>>& first,
                      std::vector<TrainingSample>& out) {
  auto sample = base_sample(s, s.exit, Flow::kExit);
  for (Task t : kAllTasks) {
    sample.labels[index(t)] = first[index(t)] ? 1 : 0;
    sample.learn[index(t)] = true;
  }
  out.push_back(sample);
}

void emit_fast_slow(const SessionRecord& s, const PerTask<std::optional<Seconds>>& first,
                    const ReportPolicy& p, std::vector<TrainingSample>& out) {
  // A session that ends inside the fast window is complete; report at exit.
  const Seconds fast_at = std::min(s.enter + p.fast_window, s.exit);
  const Seconds slow_until = std::min(s.enter + p.slow_window, s.exit);
  auto fast = base_sample(s, fast_at, Flow::kFast);
  for (Task t : kAllTasks) {
    const auto& f = first[index(t)];
    fast.labels[index(t)] = (f && *f <= fast_at) ? 1 : 0;
    fast.learn[index(t)] = true;
  }
  out.push_back(fast);

  std::vector<std::pair<Seconds, Task>> missing;
  for (Task t : kAllTasks) {
    const auto& f = first[index(t)];
    if (f && *f > fast_at && *f <= slow_until) missing.emplace_back(*f, t);
  }
  std::stable_sort(missing.begin(), missing.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [ts, t] : missing) {
    auto slow = base_sample(s, ts, Flow::kSlow);
    slow.labels[index(t)] = 1;
    slow.learn[index(t)] = true;
    out.push_back(slow);
  }
}

void emit_realtime(const SessionRecord& s, const ReportPolicy& p,
                   std::vector<TrainingSample>& out) {
  LabelLedger ledger;
  for (const auto& e : s.events) {
    Task t;
    if (behavior_task(e.behavior, t) && !ledger.first_positive(t)) ledger.observe(t, e.timestamp);
  }
  const Seconds report_until =
      p.realtime_cap ? std::min(s.enter + *p.realtime_cap, s.exit) : s.exit;

  // Group first positives by the tick that closes over them: (prev, boundary].
  std::vector<std::pair<std::int64_t, Task>> by_tick;
  for (Task t : kAllTasks) {
    const auto& f = ledger.first_positive(t);
    if (!f || *f > report_until) continue;
    const auto k = static_cast<std::int64_t>(std::ceil((*f - s.enter) / p.tick));
    by_tick.emplace_back(k, t);
  }
  std::stable_sort(by_tick.begin(), by_tick.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < by_tick.size();) {
    const std::int64_t k = by_tick[i].first;
    // A tick still open at exit is flushed with the exit.
    const Seconds boundary = std::min(s.enter + static_cast<double>(k) * p.tick, s.exit);
    auto sample = base_sample(s, boundary, Flow::kRtFirst);
    for (; i < by_tick.size() && by_tick[i].first == k; ++i) {
      const Task t = by_tick[i].second;
      ledger.mark_reported(t);
      sample.labels[index(t)] = 1;
      sample.learn[index(t)] = true;
    }
    out.push_back(sample);
  }

  auto exit_sample = base_sample(s, s.exit, Flow::kRtExit);
  bool any = false;
  for (Task t : kAllTasks) {
    if (ledger.first_positive(t)) continue;  // positive somewhere: never a negative
    ledger.mark_reported(t);
    exit_sample.learn[index(t)] = true;
    any = true;
  }
  if (any) out.push_back(exit_sample);
}

int flow_rank(Flow f) {
  switch (f) {
    case Flow::kFast: return 0;
    case Flow::kRtFirst: return 1;
    case Flow::kSlow: return 2;
    case Flow::kExit: return 3;
    default: return 4;
  }
}

}  // namespace

std::vector<TrainingSample> assemble_sessions(std::span<const SessionRecord> sessions,
                                              const ReportPolicy& policy) {
  policy.validate();
  std::vector<TrainingSample> out;
  out.reserve(sessions.size() * 2);
  for (const auto& s : sessions) {
    if (s.domain != Domain::kLive) continue;
    switch (policy.kind) {
      case ReportKind::kExitReport:
        emit_exit_report(s, first_only_filter(s.events), out);
        break;
      case ReportKind::kFastSlow:
        emit_fast_slow(s, first_only_filter(s.events), policy, out);
        break;
      case ReportKind::kRealtime:
        emit_realtime(s, policy, out);
        break;
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const TrainingSample& a, const TrainingSample& b) {
    if (a.report_ts != b.report_ts) return a.report_ts < b.report_ts;
    if (a.session_id != b.session_id) return a.session_id < b.session_id;
    return flow_rank(a.flow) < flow_rank(b.flow);
  });
  return out;
}

std::vector<TrainingSample> assemble(std::span<const InteractionEvent> events,
                                     const ReportPolicy& policy) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].timestamp < events[i - 1].timestamp) {
      throw MalformedLogError("event log not sorted by timestamp at event " +
                              std::to_string(events[i].event_id));
    }
  }
  const auto sessions = group_sessions(events);
  return assemble_sessions(sessions, policy);
}

double sample_volume_ratio(std::span<const TrainingSample> a, std::span<const TrainingSample> b) {
  if (b.empty()) throw std::invalid_argument("sample_volume_ratio: empty denominator stream");
  return static_cast<double>(a.size()) / static_cast<double>(b.size());
}

PerTask<std::size_t> slow_window_positive_counts(std::span<const SessionRecord> sessions,
                                                 Seconds slow_window) {
  PerTask<std::size_t> counts{};
  for (const auto& s : sessions) {
    if (s.domain != Domain::kLive) continue;
    const auto first = first_only_filter(s.events);
    const Seconds until = std::min(s.enter + slow_window, s.exit);
    for (Task t : kAllTasks) {
      if (first[index(t)] && *first[index(t)] <= until) ++counts[index(t)];
    }
  }
  return counts;
}

json to_json(const TrainingSample& s) {
  json labels = json::object();
  json mask = json::object();
  for (Task t : kAllTasks) {
    labels[std::string(to_string(t))] = static_cast<int>(s.labels[index(t)]);
    mask[std::string(to_string(t))] = s.learn[index(t)];
  }
  return {{"session_id", s.session_id}, {"user_id", s.user_id},   {"item_id", s.item_id},
          {"report_ts", s.report_ts},   {"flow", to_string(s.flow)}, {"labels", labels},
          {"mask", mask},               {"feature_ref", {{"as_of", s.as_of}}}};
}

TrainingSample sample_from_json(const json& j) {
  TrainingSample s;
  s.session_id = j.at("session_id").get<SessionId>();
  s.user_id = j.at("user_id").get<UserId>();
  s.item_id = j.at("item_id").get<ItemId>();
  s.report_ts = j.at("report_ts").get<double>();
  s.flow = parse_flow(j.at("flow").get<std::string>());
  for (const auto& [k, v] : j.at("labels").items()) {
    const int y = v.get<int>();
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
    s.labels[index(parse_task(k))] = static_cast<std::uint8_t>(y);
  }
  for (const auto& [k, v] : j.at("mask").items()) s.learn[index(parse_task(k))] = v.get<bool>();
  s.as_of = j.contains("feature_ref") ? j.at("feature_ref").at("as_of").get<double>() : s.report_ts;
  return s;
}

void write_samples_jsonl(std::ostream& os, std::span<const TrainingSample> samples) {
  for (const auto& s : samples) os << to_json(s).dump() << '\n';
}

std::vector<TrainingSample> read_samples_jsonl(std::istream& is) {
  std::vector<TrainingSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const std::exception& ex) {
      throw MalformedLogError("sample line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

json to_json(const ReportPolicy& p) {
  json j = {{"kind", to_string(p.kind)},
            {"fast_window", p.fast_window},
            {"slow_window", p.slow_window},
            {"tick", p.tick}};
  j["realtime_cap"] = p.realtime_cap ? json(*p.realtime_cap) : json(nullptr);
  return j;
}

ReportPolicy report_policy_from_json(const json& j) {
  ReportPolicy p;
  p.kind = parse_report_kind(j.value("kind", std::string("realtime")));
  p.fast_window = j.value("fast_window", p.fast_window);
  p.slow_window = j.value("slow_window", p.slow_window);
  p.tick = j.value("tick", p.tick);
  if (j.contains("realtime_cap") && !j.at("realtime_cap").is_null()) {
    p.realtime_cap = j.at("realtime_cap").get<double>();
  }
  return p;
}

}  // namespace streamrank
