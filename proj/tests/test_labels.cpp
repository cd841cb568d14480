#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "streamrank/labels.hpp"

using namespace streamrank;

namespace {

struct LogBuilder {
  std::vector<InteractionEvent> events;
  EventId next = 1;

  void session(SessionId sid, Seconds enter, Seconds exit,
               std::vector<std::pair<BehaviorKind, Seconds>> behaviors, UserId user = 1,
               ItemId item = 5) {
    events.push_back({next++, user, item, Domain::kLive, BehaviorKind::kImpression, enter, sid, {}});
    for (auto [b, t] : behaviors) {
      std::optional<double> v;
      if (b == BehaviorKind::kGift) v = 1.0;
      events.push_back({next++, user, item, Domain::kLive, b, t, sid, v});
    }
    events.push_back({next++, user, item, Domain::kLive, BehaviorKind::kExit, exit, sid, {}});
  }

  std::vector<InteractionEvent> sorted() const {
    auto e = events;
    std::stable_sort(e.begin(), e.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    return e;
  }
};

std::size_t ti(Task t) { return index(t); }

}  // namespace

TEST_CASE("policy invariants") {
  CHECK_NOTHROW(ReportPolicy::fast_slow().validate());
  CHECK_THROWS_AS(ReportPolicy::fast_slow(400, 300).validate(), ConfigError);
  CHECK_THROWS_AS(ReportPolicy::realtime(0).validate(), ConfigError);
  ReportPolicy p = ReportPolicy::realtime(600);
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("first_only_filter keeps the minimum per task") {
  LogBuilder b;
  b.session(1, 0, 100,
            {{BehaviorKind::kClick, 10}, {BehaviorKind::kClick, 12}, {BehaviorKind::kComment, 50},
             {BehaviorKind::kComment, 80}, {BehaviorKind::kComment, 90}});
  const auto f = first_only_filter(b.sorted());
  CHECK(f[ti(Task::kComment)] == 50.0);
  CHECK(f[ti(Task::kClick)] == 10.0);
  CHECK_FALSE(f[ti(Task::kGift)].has_value());
}

TEST_CASE("exit_report: one fully unmasked sample per session at exit") {
  LogBuilder b;
  b.session(1, 0, 500, {{BehaviorKind::kClick, 10}, {BehaviorKind::kLike, 400}});
  b.session(2, 5, 50, {});
  const auto s = assemble(b.sorted(), ReportPolicy::exit_report());
  REQUIRE(s.size() == 2);
  CHECK(s[0].session_id == 2);
  CHECK(s[0].report_ts == 50.0);
  CHECK(s[1].report_ts == 500.0);
  CHECK(s[1].flow == Flow::kExit);
  CHECK(s[1].labels[ti(Task::kClick)] == 1);
  CHECK(s[1].labels[ti(Task::kLike)] == 1);
  CHECK(s[1].labels[ti(Task::kGift)] == 0);
  for (bool l : s[1].learn) CHECK(l);
}

TEST_CASE("fast_slow hand trace: fast @300 plus slow @400 for like") {
  LogBuilder b;
  b.session(1, 0, 500, {{BehaviorKind::kClick, 10}, {BehaviorKind::kLike, 400}});
  const auto s = assemble(b.sorted(), ReportPolicy::fast_slow(300, 3600));
  REQUIRE(s.size() == 2);
  CHECK(s[0].flow == Flow::kFast);
  CHECK(s[0].report_ts == 300.0);
  CHECK(s[0].labels[ti(Task::kClick)] == 1);
  CHECK(s[0].labels[ti(Task::kLike)] == 0);
  for (bool l : s[0].learn) CHECK(l);
  CHECK(s[1].flow == Flow::kSlow);
  CHECK(s[1].report_ts == 400.0);
  for (Task t : kAllTasks) {
    CHECK(s[1].learn[ti(t)] == (t == Task::kLike));
  }
  CHECK(s[1].labels[ti(Task::kLike)] == 1);
  CHECK(s[0].as_of == 0.0);
}

TEST_CASE("fast_slow: early exit emits at exit, ignored window drops late positives") {
  LogBuilder b;
  b.session(1, 0, 100, {{BehaviorKind::kClick, 90}});
  b.session(2, 0, 5000, {{BehaviorKind::kGift, 3700}, {BehaviorKind::kLike, 3600}});
  const auto s = assemble(b.sorted(), ReportPolicy::fast_slow(300, 3600));
  REQUIRE(s.size() == 3);
  CHECK(s[0].session_id == 1);
  CHECK(s[0].report_ts == 100.0);
  CHECK(s[0].labels[ti(Task::kClick)] == 1);
  CHECK(s[1].session_id == 2);
  CHECK(s[1].flow == Flow::kFast);
  CHECK(s[2].flow == Flow::kSlow);
  CHECK(s[2].report_ts == 3600.0);
  CHECK(s[2].learn[ti(Task::kLike)]);
  CHECK_FALSE(s[2].learn[ti(Task::kGift)]);
}

TEST_CASE("realtime hand trace: rt_first @30 and @420, rt_exit @500") {
  LogBuilder b;
  b.session(1, 0, 500, {{BehaviorKind::kClick, 10}, {BehaviorKind::kLike, 400}});
  const auto s = assemble(b.sorted(), ReportPolicy::realtime(30));
  REQUIRE(s.size() == 3);
  CHECK(s[0].flow == Flow::kRtFirst);
  CHECK(s[0].report_ts == 30.0);
  for (Task t : kAllTasks) CHECK(s[0].learn[ti(t)] == (t == Task::kClick));
  CHECK(s[0].labels[ti(Task::kClick)] == 1);
  CHECK(s[1].flow == Flow::kRtFirst);
  CHECK(s[1].report_ts == 420.0);
  for (Task t : kAllTasks) CHECK(s[1].learn[ti(t)] == (t == Task::kLike));
  CHECK(s[2].flow == Flow::kRtExit);
  CHECK(s[2].report_ts == 500.0);
  for (Task t : kAllTasks) {
    const bool pos = t == Task::kClick || t == Task::kLike;
    CHECK(s[2].learn[ti(t)] == !pos);
    CHECK(s[2].labels[ti(t)] == 0);
  }
}

TEST_CASE("realtime: boundary positives belong to the closing tick, repeats are suppressed") {
  LogBuilder b;
  b.session(1, 100, 1000,
            {{BehaviorKind::kClick, 130}, {BehaviorKind::kComment, 131},
             {BehaviorKind::kComment, 140}, {BehaviorKind::kComment, 500}});
  const auto s = assemble(b.sorted(), ReportPolicy::realtime(30));
  REQUIRE(s.size() == 3);
  CHECK(s[0].report_ts == 130.0);
  CHECK(s[0].learn[ti(Task::kClick)]);
  CHECK(s[1].report_ts == 160.0);
  CHECK(s[1].learn[ti(Task::kComment)]);
  CHECK(s[2].flow == Flow::kRtExit);
}

TEST_CASE("realtime: zero-positive session yields one all-negative rt_exit") {
  LogBuilder b;
  b.session(1, 0, 45, {});
  const auto s = assemble(b.sorted(), ReportPolicy::realtime(30));
  REQUIRE(s.size() == 1);
  CHECK(s[0].flow == Flow::kRtExit);
  for (Task t : kAllTasks) {
    CHECK(s[0].learn[ti(t)]);
    CHECK(s[0].labels[ti(t)] == 0);
  }
}

TEST_CASE("realtime: an open tick is flushed at exit; all-positive session has no rt_exit") {
  LogBuilder b;
  b.session(1, 0, 50,
            {{BehaviorKind::kClick, 1}, {BehaviorKind::kEffectiveView, 2},
             {BehaviorKind::kLongView, 3}, {BehaviorKind::kLike, 4}, {BehaviorKind::kComment, 5},
             {BehaviorKind::kGift, 45}});
  const auto s = assemble(b.sorted(), ReportPolicy::realtime(30));
  REQUIRE(s.size() == 2);
  CHECK(s[1].report_ts == 50.0);
  CHECK(s[1].flow == Flow::kRtFirst);
  CHECK(s[1].learn[ti(Task::kGift)]);
}

TEST_CASE("realtime cap drops late positives from rt_first but never reports them as negative") {
  LogBuilder b;
  b.session(1, 0, 5000, {{BehaviorKind::kGift, 4000}});
  ReportPolicy p = ReportPolicy::realtime(30);
  p.realtime_cap = 3600;
  const auto s = assemble(b.sorted(), p);
  for (const auto& x : s) {
    CHECK_FALSE((x.learn[ti(Task::kGift)] && x.labels[ti(Task::kGift)] == 0));
    CHECK_FALSE((x.learn[ti(Task::kGift)] && x.labels[ti(Task::kGift)] == 1));
  }
}

TEST_CASE("malformed logs are rejected with the session named") {
  std::vector<InteractionEvent> ev = {
      {1, 1, 5, Domain::kLive, BehaviorKind::kImpression, 0.0, 77, {}},
      {2, 1, 5, Domain::kLive, BehaviorKind::kClick, 3.0, 77, {}},
  };
  try {
    assemble(ev, ReportPolicy::realtime());
    FAIL("expected MalformedLogError");
  } catch (const MalformedLogError& e) {
    CHECK(std::string(e.what()).find("77") != std::string::npos);
  }
  std::vector<InteractionEvent> unsorted = {
      {1, 1, 5, Domain::kLive, BehaviorKind::kImpression, 5.0, 1, {}},
      {2, 1, 5, Domain::kLive, BehaviorKind::kExit, 4.0, 1, {}},
  };
  CHECK_THROWS_AS(assemble(unsorted, ReportPolicy::exit_report()), MalformedLogError);
}

TEST_CASE("ledger transitions at most once and keeps the first positive") {
  LabelLedger l;
  l.observe(Task::kLike, 10);
  l.observe(Task::kLike, 20);
  CHECK(l.first_positive(Task::kLike) == 10.0);
  CHECK_FALSE(l.reported(Task::kLike));
  l.mark_reported(Task::kLike);
  CHECK(l.reported(Task::kLike));
  CHECK_THROWS_AS(l.mark_reported(Task::kLike), std::logic_error);
}

TEST_CASE("sample_volume_ratio") {
  LogBuilder b;
  b.session(1, 0, 500, {{BehaviorKind::kClick, 10}});
  b.session(2, 0, 500, {});
  const auto ev = b.sorted();
  const auto rt = assemble(ev, ReportPolicy::realtime());
  const auto fs = assemble(ev, ReportPolicy::fast_slow());
  CHECK(sample_volume_ratio(rt, rt) == 1.0);
  // Sessions with at most one positive task: rt <= 2 per session, fs >= 1.
  CHECK(sample_volume_ratio(rt, fs) <= 1.5);
  CHECK_THROWS_AS(sample_volume_ratio(rt, {}), std::invalid_argument);
}

TEST_CASE("policy invariants on simulated logs") {
  SimConfig c = SimConfig::defaults();
  c.num_users = 60;
  c.num_rooms = 4;
  c.num_short_videos = 0;
  c.horizon = 7200;
  c.seed = 21;
  const auto events = simulate(c).events;
  const auto bounds = oracle::session_bounds(events);

  SUBCASE("realtime covers every pre-exit positive exactly once, never a fake negative") {
    const auto s = assemble(events, ReportPolicy::realtime());
    const auto truth = oracle::positives_before(events, [&](SessionId id) { return bounds.at(id).exit; });
    CHECK(oracle::reported_positives(s) == truth);
    std::map<oracle::SessionTask, int> unmasked;
    for (const auto& x : s) {
      for (std::size_t t = 0; t < kNumTasks; ++t) {
        if (!x.learn[t]) continue;
        ++unmasked[{x.session_id, t}];
        if (x.labels[t] == 0) CHECK(truth.count({x.session_id, t}) == 0);
      }
      if (x.flow == Flow::kRtFirst) {
        for (std::size_t t = 0; t < kNumTasks; ++t) CHECK((!x.learn[t] || x.labels[t] == 1));
      }
      CHECK(x.report_ts >= bounds.at(x.session_id).enter);
    }
    for (const auto& [k, n] : unmasked) CHECK(n == 1);
  }

  SUBCASE("fast_slow covers positives before enter + slow window; slow flow only positives") {
    const auto p = ReportPolicy::fast_slow(300, 3600);
    const auto s = assemble(events, p);
    const auto truth = oracle::positives_before(events, [&](SessionId id) {
      return std::min(bounds.at(id).enter + 3600, bounds.at(id).exit);
    });
    CHECK(oracle::reported_positives(s) == truth);
    std::size_t fake_negatives = 0, slow = 0;
    for (const auto& x : s) {
      if (x.flow == Flow::kSlow) {
        ++slow;
        for (std::size_t t = 0; t < kNumTasks; ++t) CHECK((!x.learn[t] || x.labels[t] == 1));
      }
      if (x.flow == Flow::kFast) {
        for (std::size_t t = 0; t < kNumTasks; ++t) {
          if (x.labels[t] == 0 && truth.count({x.session_id, t})) ++fake_negatives;
        }
        CHECK(x.report_ts <= bounds.at(x.session_id).enter + 300);
      }
    }
    CHECK(fake_negatives == slow);
  }

  SUBCASE("exit covers everything with one sample per session") {
    const auto s = assemble(events, ReportPolicy::exit_report());
    CHECK(s.size() == bounds.size());
    const auto truth = oracle::positives_before(events, [&](SessionId id) { return bounds.at(id).exit; });
    CHECK(oracle::reported_positives(s) == truth);
  }

  SUBCASE("realtime latency bound") {
    const auto s = assemble(events, ReportPolicy::realtime(30));
    const auto sessions = group_sessions(events);
    std::map<SessionId, PerTask<std::optional<Seconds>>> first;
    for (const auto& r : sessions) first[r.session_id] = first_only_filter(r.events);
    for (const auto& x : s) {
      if (x.flow != Flow::kRtFirst) continue;
      for (std::size_t t = 0; t < kNumTasks; ++t) {
        if (x.learn[t]) CHECK(x.report_ts <= *first[x.session_id][t] + 30 + 1e-9);
      }
    }
  }

  SUBCASE("output sorted by report_ts and deterministic") {
    const auto a = assemble(events, ReportPolicy::realtime());
    const auto b = assemble(events, ReportPolicy::realtime());
    CHECK(a == b);
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].report_ts <= a[i].report_ts);
  }
}

TEST_CASE("sample JSONL round trip") {
  LogBuilder b;
  b.session(1, 0, 500, {{BehaviorKind::kClick, 10}, {BehaviorKind::kLike, 400}});
  const auto s = assemble(b.sorted(), ReportPolicy::realtime());
  std::stringstream ss;
  write_samples_jsonl(ss, s);
  CHECK(read_samples_jsonl(ss) == s);
  const auto j = to_json(s[0]);
  CHECK(j.at("mask").at("click") == true);
  CHECK(j.at("labels").at("click") == 1);
}
