#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "streamrank/metrics.hpp"

using namespace streamrank;

namespace {

std::vector<ScoredExample> hand_set() {
  const std::vector<std::pair<double, int>> v = {{0.9, 1}, {0.8, 0}, {0.7, 1},
                                                 {0.6, 1}, {0.5, 0}, {0.4, 0}};
  std::vector<ScoredExample> out;
  for (auto [s, y] : v) out.push_back({1, s, static_cast<std::uint8_t>(y), Task::kClick});
  return out;
}

/// A user whose examples give exactly AUC 1.0 (sep) or 0.5 (all tied).
void add_user(std::vector<ScoredExample>& ex, UserId u, std::size_t n, bool separated) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t y = i < n / 2;
    ex.push_back({u, separated ? (y ? 1.0 : 0.0) : 0.5, y, Task::kClick});
  }
}

std::vector<SeriesPoint> grid(Seconds end, Seconds dt, const std::function<double(Seconds)>& f) {
  std::vector<SeriesPoint> out;
  for (Seconds t = 0; t <= end; t += dt) out.push_back({t, f(t)});
  return out;
}

}  // namespace

TEST_CASE("auc hand examples") {
  CHECK(*auc(hand_set()) == doctest::Approx(7.0 / 9.0));
  auto sep = hand_set();
  for (auto& e : sep) e.score = e.label ? 2.0 + e.score : e.score;
  CHECK(*auc(sep) == 1.0);
  auto one = hand_set();
  for (auto& e : one) e.label = 1;
  CHECK_FALSE(auc(one).has_value());
  auto bad = hand_set();
  bad[0].score = NAN;
  CHECK_THROWS(auc(bad));
}

TEST_CASE("auc matches pair enumeration and is invariant to monotone transforms") {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng() % 200;
    std::vector<ScoredExample> ex(n);
    for (auto& e : ex) {
      e.score = static_cast<double>(rng() % 20) / 7.0;  // plenty of ties
      e.label = rng() % 3 == 0;
    }
    const auto a = auc(ex);
    const auto o = oracle::pair_auc(ex);
    REQUIRE(a.has_value() == o.has_value());
    if (!a) continue;
    CHECK(std::abs(*a - *o) < 1e-12);
    auto t = ex;
    for (auto& e : t) e.score = std::exp(3.0 * e.score) - 5.0;
    CHECK(std::abs(*auc(t) - *a) < 1e-12);
  }
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> u;
  std::vector<ScoredExample> noise(20000);
  for (auto& e : noise) e = {1, u(rng), static_cast<std::uint8_t>(coin(rng)), Task::kClick};
  CHECK(*auc(noise) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("gauc fixtures") {
  std::vector<ScoredExample> ex;
  add_user(ex, 1, 10, true);
  add_user(ex, 2, 30, false);
  CHECK(*gauc(ex) == doctest::Approx(0.625));

  std::vector<ScoredExample> single;
  add_user(single, 3, 8, true);
  single.push_back({4, 0.3, 1, Task::kClick});  // single-class user is excluded
  CHECK(*gauc(single) == 1.0);

  std::vector<ScoredExample> none = {{1, 0.2, 1, Task::kClick}, {2, 0.4, 0, Task::kClick}};
  CHECK_FALSE(gauc(none).has_value());

  // Every user with AUC 7/9 gives GAUC 7/9 regardless of counts.
  std::vector<ScoredExample> same;
  for (UserId u = 1; u <= 4; ++u) {
    for (int k = 0; k < static_cast<int>(u); ++k) {
      for (auto e : hand_set()) {
        e.user_id = u;
        same.push_back(e);
      }
    }
  }
  CHECK(*gauc(same) == doctest::Approx(7.0 / 9.0));
}

TEST_CASE("consistency table: hand count, no-delay case, monotonicity") {
  // Four like sessions: three liked within 5 minutes, one after 10 minutes.
  std::vector<InteractionEvent> ev;
  EventId id = 1;
  const Seconds likes[] = {30, 100, 250, 600};
  for (SessionId s = 1; s <= 4; ++s) {
    const Seconds t0 = 10.0 * s;
    ev.push_back({id++, s, 5, Domain::kLive, BehaviorKind::kImpression, t0, s, {}});
    ev.push_back({id++, s, 5, Domain::kLive, BehaviorKind::kLike, t0 + likes[s - 1], s, {}});
    ev.push_back({id++, s, 5, Domain::kLive, BehaviorKind::kExit, t0 + 1000, s, {}});
  }
  std::stable_sort(ev.begin(), ev.end(), [](auto& a, auto& b) { return a.timestamp < b.timestamp; });
  const auto sessions = group_sessions(ev);
  auto rows = consistency_table(sessions, 300, 3600);
  const auto& like = rows[index(Task::kLike)];
  CHECK(like.fast_positive_count == 3);
  CHECK(like.slow_window_positive_count == 4);
  CHECK(*like.consistency == doctest::Approx(0.75));
  CHECK_FALSE(rows[index(Task::kGift)].consistency.has_value());
  CHECK(to_json(rows[index(Task::kGift)]).at("consistency").is_null());

  rows = consistency_table(sessions, 900, 3600);
  CHECK(*rows[index(Task::kLike)].consistency == 1.0);

  SimConfig c = SimConfig::defaults();
  c.num_users = 150;
  c.num_rooms = 4;
  c.num_short_videos = 0;
  c.horizon = 7200;
  c.seed = 15;
  const auto sim_sessions = group_sessions(simulate(c).events);
  std::vector<std::vector<ConsistencyRow>> tables;
  for (Seconds fast : {600.0, 300.0, 120.0, 30.0}) tables.push_back(consistency_table(sim_sessions, fast, 3600));
  for (std::size_t i = 1; i < tables.size(); ++i) {
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      if (!tables[i][t].consistency) continue;
      CHECK(*tables[i][t].consistency <= *tables[i - 1][t].consistency);
      CHECK(*tables[i][t].consistency >= 0.0);
      CHECK(*tables[i][t].consistency <= 1.0);
    }
  }
}

TEST_CASE("detection lag: shifted copy, flat series, errors") {
  auto truth = grid(3600, 30, [](Seconds t) { return t >= 1800 && t < 2400 ? 0.8 : 0.2; });
  auto shifted = grid(3600, 30, [](Seconds t) { return t >= 1920 && t < 2520 ? 0.8 : 0.2; });
  const std::vector<Seconds> onsets = {1800};
  auto r = detection_lag(shifted, truth, onsets);
  CHECK(r.mean_lag == doctest::Approx(120.0));
  CHECK(r.onsets[0].detected);

  auto flat = grid(3600, 30, [](Seconds) { return 0.5; });
  r = detection_lag(flat, truth, onsets);
  CHECK(r.mean_lag == doctest::Approx(3600.0 - 1800.0));
  CHECK_FALSE(r.onsets[0].detected);

  CHECK_THROWS_AS(detection_lag({}, {}, onsets), std::invalid_argument);
  CHECK_THROWS_AS(detection_lag(flat, truth, {}), std::invalid_argument);
  const auto j = to_json(r);
  CHECK(j.contains("mean_lag"));
}
