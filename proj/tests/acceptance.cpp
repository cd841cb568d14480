// Acceptance checks 1-12. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "streamrank/cross_bench.hpp"
#include "streamrank/losses.hpp"
#include "streamrank/pipeline.hpp"

using namespace streamrank;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// 1 ---------------------------------------------------------------------------
Outcome pu_identity() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Prediction p;
    for (auto& x : p.prob) {
      do x = u(rng);
      while (x <= 0.0);
    }
    PerTask<std::uint8_t> zeros{}, ones{};
    ones.fill(1);
    PerTask<bool> all;
    all.fill(true);
    const double err = std::abs(loss_fast(p, zeros) + loss_slow_pu(p, all) - loss_fast(p, ones));
    worst = std::max(worst, err);
  }
  return {worst < 1e-12, fmt("10000 draws, max |lhs - rhs| = %.3g (tol 1e-12)", worst)};
}

// 2 ---------------------------------------------------------------------------
Outcome gradient_checks() {
  std::mt19937_64 rng(102);
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  double worst[5] = {0, 0, 0, 0, 0};
  auto upd = [](double& w, double e) { w = std::max(w, e); };

  for (int rep = 0; rep < 100; ++rep) {
    PerTask<double> z{};
    PerTask<std::uint8_t> y{};
    PerTask<bool> m{};
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      z[t] = 2.0 * g(rng);
      y[t] = coin(rng);
      m[t] = coin(rng);
    }
    m[rng() % kNumTasks] = true;
    auto pred = [&] {
      Prediction p;
      for (std::size_t t = 0; t < kNumTasks; ++t) p.prob[t] = sigmoid(z[t]);
      return p;
    };
    const auto gf = loss_fast_logit_grad(pred(), y);
    const auto gp = loss_slow_pu_logit_grad(pred(), m);
    const auto gm = loss_moment_logit_grad(pred(), y, m);
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      upd(worst[0], oracle::rel_err(gf[t], oracle::central([&] { return loss_fast(pred(), y); }, z[t])));
      upd(worst[1], oracle::rel_err(gp[t], oracle::central([&] { return loss_slow_pu(pred(), m); }, z[t])));
      upd(worst[2], oracle::rel_err(gm[t], oracle::central([&] { return loss_moment(pred(), y, m); }, z[t])));
    }
  }

  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index B = 2 + rng() % 7, D = 2 + rng() % 6;
    const double tau = 0.1 + 0.9 * std::uniform_real_distribution<double>()(rng);
    Mat A = Mat::NullaryExpr(B, D, [&] { return 0.5 * g(rng); });
    Mat O = Mat::NullaryExpr(B, D, [&] { return 0.5 * g(rng); });
    const auto r = contrastive_align(A, O, tau);
    for (Eigen::Index i = 0; i < A.size(); ++i) {
      upd(worst[3], oracle::rel_err(r.grad_anchors.data()[i],
                                    oracle::central([&] { return contrastive_align(A, O, tau).loss; }, A.data()[i])));
      upd(worst[3], oracle::rel_err(r.grad_others.data()[i],
                                    oracle::central([&] { return contrastive_align(A, O, tau).loss; }, O.data()[i])));
    }
  }

  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t heads = 1 + rng() % 2;
    const Eigen::Index cd = 2 + rng() % 5, id = 2 + rng() % 5, d = 2 * heads * (1 + rng() % 2);
    const Eigen::Index L = 1 + rng() % 8;
    auto m = [&](Eigen::Index r, Eigen::Index c) { return Mat(Mat::NullaryExpr(r, c, [&] { return 0.6 * g(rng); })); };
    AttentionProjections p{m(cd, d), m(id, d), m(id, d), heads};
    Vec c = m(cd, 1).col(0);
    Mat S = m(L, id);
    std::vector<bool> mask(static_cast<std::size_t>(L));
    for (auto&& b : mask) b = coin(rng);
    mask[rng() % mask.size()] = true;
    const Vec dout = m(d, 1).col(0);
    auto f = [&] { return esu_target_attention(c, S, mask, p).output.dot(dout); };
    const auto fwd = esu_target_attention(c, S, mask, p);
    const auto gr = esu_backward(c, S, mask, p, fwd, dout);
    for (Eigen::Index i = 0; i < c.size(); ++i) upd(worst[4], oracle::rel_err(gr.d_candidate(i), oracle::central(f, c(i))));
    for (Eigen::Index i = 0; i < S.size(); ++i) upd(worst[4], oracle::rel_err(gr.d_seq.data()[i], oracle::central(f, S.data()[i])));
    for (Eigen::Index i = 0; i < p.wq.size(); ++i) upd(worst[4], oracle::rel_err(gr.d_wq.data()[i], oracle::central(f, p.wq.data()[i])));
    for (Eigen::Index i = 0; i < p.wk.size(); ++i) upd(worst[4], oracle::rel_err(gr.d_wk.data()[i], oracle::central(f, p.wk.data()[i])));
    for (Eigen::Index i = 0; i < p.wv.size(); ++i) upd(worst[4], oracle::rel_err(gr.d_wv.data()[i], oracle::central(f, p.wv.data()[i])));
  }
  const double w = *std::max_element(worst, worst + 5);
  return {w < 1e-4, fmt("max rel err fast %.2g, slow_pu %.2g, moment %.2g, contrastive %.2g, attention %.2g "
                        "(tol 1e-4, 100 configs each)", worst[0], worst[1], worst[2], worst[3], worst[4])};
}

// Events of the first n live sessions of a small simulation.
std::vector<InteractionEvent> thousand_sessions() {
  SimConfig c = SimConfig::defaults();
  c.num_users = 150;
  c.num_rooms = 6;
  c.num_short_videos = 0;
  c.horizon = 3 * 3600;
  c.seed = 103;
  const auto all = simulate(c).events;
  std::set<SessionId> keep;
  for (const auto& e : all) {
    if (e.behavior == BehaviorKind::kImpression && e.domain == Domain::kLive && keep.size() < 1000) {
      keep.insert(e.session_id);
    }
  }
  std::vector<InteractionEvent> out;
  for (const auto& e : all) {
    if (keep.count(e.session_id)) out.push_back(e);
  }
  return out;
}

// 3 ---------------------------------------------------------------------------
Outcome coverage_oracle() {
  const auto events = thousand_sessions();
  const auto b = oracle::session_bounds(events);
  const auto slow = ReportPolicy::fast_slow();
  auto diff = [](const std::set<oracle::SessionTask>& a, const std::set<oracle::SessionTask>& o) {
    std::vector<oracle::SessionTask> d;
    std::set_symmetric_difference(a.begin(), a.end(), o.begin(), o.end(), std::back_inserter(d));
    return d.size();
  };
  const auto at_exit = oracle::positives_before(events, [&](SessionId s) { return b.at(s).exit; });
  const auto in_slow = oracle::positives_before(
      events, [&](SessionId s) { return std::min(b.at(s).exit, b.at(s).enter + slow.slow_window); });
  const std::size_t rt = diff(oracle::reported_positives(assemble(events, ReportPolicy::realtime())), at_exit);
  const std::size_t fsl = diff(oracle::reported_positives(assemble(events, slow)), in_slow);
  const std::size_t ex = diff(oracle::reported_positives(assemble(events, ReportPolicy::exit_report())), at_exit);
  return {b.size() == 1000 && rt + fsl + ex == 0,
          fmt("%zu sessions, mismatches realtime %zu, fast_slow %zu, exit %zu", b.size(), rt, fsl, ex)};
}

// 4 ---------------------------------------------------------------------------
Outcome first_only() {
  const auto events = thousand_sessions();
  const auto b = oracle::session_bounds(events);
  const auto positive = oracle::positives_before(events, [&](SessionId s) { return b.at(s).exit; });
  std::map<oracle::SessionTask, int> unmasked;
  std::size_t repeats = 0, fake = 0;
  for (const auto& s : assemble(events, ReportPolicy::realtime())) {
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      if (!s.learn[t]) continue;
      if (++unmasked[{s.session_id, t}] > 1) ++repeats;
      if (s.flow == Flow::kRtExit && s.labels[t] == 0 && positive.count({s.session_id, t})) ++fake;
    }
  }
  return {repeats + fake == 0,
          fmt("%zu sessions, repeated unmasks %zu, rt_exit zeros over positives %zu", b.size(), repeats, fake)};
}

// 5 ---------------------------------------------------------------------------
Outcome table_one() {
  RunConfig c;
  const auto sessions = group_sessions(simulate(c.sim).events);
  const auto rows = consistency_table(sessions, 300, 3600);
  auto v = [&](Task t) { return rows[index(t)].consistency.value_or(-1.0); };
  const double lv = v(Task::kLongView), cl = v(Task::kClick), lk = v(Task::kLike), gf = v(Task::kGift);
  const bool ok = lv >= cl && cl > lk && lk > gf && lv >= 0.99 && gf <= cl - 0.15;
  return {ok, fmt("long_view %.3f, click %.3f, like %.3f, comment %.3f, gift %.3f", lv, cl, lk,
                  v(Task::kComment), gf)};
}

// 6 ---------------------------------------------------------------------------
Outcome headline() {
  std::string detail;
  bool every = true;
  double gap_sum = 0.0;
  const std::uint64_t seeds[] = {7, 8, 9, 10, 11};
  for (std::uint64_t seed : seeds) {
    RunConfig c;
    c.apply_seed(seed);
    const Experiment ex = Experiment::prepare(c);
    const double fsl = run_policy(ex, c, ReportPolicy::fast_slow()).lag.mean_lag;
    const double rt = run_policy(ex, c, ReportPolicy::realtime()).lag.mean_lag;
    every = every && rt < fsl;
    gap_sum += fsl - rt;
    detail += fmt("seed %llu fast_slow %.1fs realtime %.1fs; ", static_cast<unsigned long long>(seed), fsl, rt);
  }
  const double gap = gap_sum / std::size(seeds);
  return {every && gap >= 120.0, detail + fmt("mean gap %.1fs (need >= 120s, realtime lower on every seed)", gap)};
}

// 7 ---------------------------------------------------------------------------
Outcome metric_oracles() {
  std::mt19937_64 rng(107);
  double worst = 0.0;
  std::size_t undefined_mismatch = 0;
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<ScoredExample> ex(1 + rng() % 200);
    const int levels = 2 + static_cast<int>(rng() % 50);
    for (auto& e : ex) {
      e.score = static_cast<double>(rng() % levels) / levels;
      e.label = rng() % 2;
    }
    const auto a = auc(ex);
    const auto o = oracle::pair_auc(ex);
    if (a.has_value() != o.has_value()) ++undefined_mismatch;
    if (a && o) worst = std::max(worst, std::abs(*a - *o));
  }
  // gauc fixtures: hand-computed weighted means.
  auto user = [](std::vector<ScoredExample>& ex, UserId u, std::size_t n, double target) {
    // target 1.0: separated; 0.5: tied; 0.0: inverted.
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint8_t y = i < n / 2;
      const double s = target == 0.5 ? 0.5 : (y == (target == 1.0) ? 1.0 : 0.0);
      ex.push_back({u, s, y, Task::kClick});
    }
  };
  std::vector<ScoredExample> f1, f2, f3;
  user(f1, 1, 10, 1.0);
  user(f1, 2, 30, 0.5);
  user(f2, 1, 20, 1.0);
  user(f2, 2, 20, 0.0);
  user(f2, 3, 40, 0.5);
  f2.push_back({4, 0.9, 1, Task::kClick});  // single-class user excluded
  user(f3, 5, 6, 0.0);
  user(f3, 6, 18, 1.0);
  const double g1 = gauc(f1).value_or(-1), g2 = gauc(f2).value_or(-1), g3 = gauc(f3).value_or(-1);
  const double e1 = 0.625, e2 = (20 * 1.0 + 20 * 0.0 + 40 * 0.5) / 80.0, e3 = 18.0 / 24.0;
  const double gerr = std::max({std::abs(g1 - e1), std::abs(g2 - e2), std::abs(g3 - e3)});
  return {worst < 1e-12 && undefined_mismatch == 0 && gerr < 1e-12,
          fmt("500 auc instances max err %.3g, undefined mismatches %zu; gauc %.4f/%.4f/%.4f vs %.4f/%.4f/%.4f",
              worst, undefined_mismatch, g1, g2, g3, e1, e2, e3)};
}

// 8 ---------------------------------------------------------------------------
Outcome gsu_oracles() {
  std::mt19937_64 rng(108);
  std::size_t mismatches = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto h = oracle::random_history(rng, 1000, 8);
    const Vec c = rep % 2 ? h[rng() % h.size()].embedding
                          : Vec(Vec::NullaryExpr(8, [&] { return std::normal_distribution<double>()(rng); }));
    const AuthorId a = 1 + rng() % 7;
    const std::size_t L = 1 + rng() % 100;
    const auto b = build_bundle(h, CandidateContext{Vec::Zero(1), c, a}, L);
    mismatches += oracle::seq_ids(b[SequenceKind::kShort]) != oracle::recent(h, L);
    mismatches += oracle::seq_ids(b[SequenceKind::kLong]) != oracle::dot_topk(h, Domain::kShortVideo, c, L);
    mismatches += oracle::seq_ids(b[SequenceKind::kAidHard]) != oracle::hard_author(h, a, L);
    mismatches += oracle::seq_ids(b[SequenceKind::kLiveLong]) != oracle::dot_topk(h, Domain::kLive, c, L);
    mismatches += oracle::seq_ids(b[SequenceKind::kMixed]) != oracle::mixed_longview(h, L);
  }
  return {mismatches == 0, fmt("200 histories x 1000 items x 5 GSUs, mismatches %zu", mismatches)};
}

// 9 ---------------------------------------------------------------------------
Outcome attention_properties() {
  std::mt19937_64 rng(109);
  std::normal_distribution<double> g(0.0, 1.0);
  auto m = [&](Eigen::Index r, Eigen::Index c) { return Mat(Mat::NullaryExpr(r, c, [&] { return g(rng); })); };
  double sum_err = 0.0, perm_err = 0.0;
  std::size_t reduction_fail = 0, padding_weight = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t heads = 1 + rep % 2;
    AttentionProjections p{m(6, 4), m(5, 4), m(5, 4), heads};
    const Vec c = m(6, 1).col(0);
    const Eigen::Index L = 2 + rng() % 12;
    const Mat S = m(L, 5);
    std::vector<bool> mask(static_cast<std::size_t>(L));
    for (auto&& b : mask) b = rng() % 3 != 0;
    mask[0] = true;
    const auto r = esu_target_attention(c, S, mask, p);
    for (Eigen::Index h = 0; h < r.weights.cols(); ++h) {
      sum_err = std::max(sum_err, std::abs(r.weights.col(h).sum() - 1.0));
      for (Eigen::Index i = 0; i < L; ++i) padding_weight += !mask[static_cast<std::size_t>(i)] && r.weights(i, h) != 0.0;
    }
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(L));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat Sp(L, 5);
    std::vector<bool> mp(static_cast<std::size_t>(L));
    for (Eigen::Index i = 0; i < L; ++i) {
      Sp.row(i) = S.row(perm[static_cast<std::size_t>(i)]);
      mp[static_cast<std::size_t>(i)] = mask[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    perm_err = std::max(perm_err, (esu_target_attention(c, Sp, mp, p).output - r.output).cwiseAbs().maxCoeff());

    // Reductions: one valid item, and identical items at every position.
    const Vec value = (S.row(0) * p.wv).transpose();
    std::vector<bool> single(static_cast<std::size_t>(L), false);
    single[0] = true;
    reduction_fail += esu_target_attention(c, S, single, p).output != value;
    Mat same(L, 5);
    for (Eigen::Index i = 0; i < L; ++i) same.row(i) = S.row(0);
    reduction_fail += esu_target_attention(c, same, std::vector<bool>(static_cast<std::size_t>(L), true), p).output != value;
  }
  return {sum_err <= 1e-9 && perm_err <= 1e-10 && reduction_fail == 0 && padding_weight == 0,
          fmt("max |sum w - 1| %.2g (tol 1e-9), padding weights %zu, inexact reductions %zu, "
              "permutation err %.2g (tol 1e-10)", sum_err, padding_weight, reduction_fail, perm_err)};
}

// 10 --------------------------------------------------------------------------
Outcome alignment() {
  AlignmentCorpus corpus = make_alignment_corpus({});
  const auto r = train_alignment(corpus, {});
  const double gain = r.cosine_after - r.cosine_before;
  return {gain >= 0.1, fmt("mean cosine(mixed, short) %.3f -> %.3f, gain %.3f (need >= 0.1)", r.cosine_before,
                           r.cosine_after, gain)};
}

// 11 --------------------------------------------------------------------------
Outcome cross_ablation() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CrossBenchConfig c;
    c.seed = seed;
    const auto r = run_cross_ablation(c);
    wins += r.auc_full > r.auc_ablated;
    detail += fmt("seed %llu %.4f vs %.4f; ", static_cast<unsigned long long>(seed), r.auc_full, r.auc_ablated);
  }
  return {wins >= 4, detail + fmt("full model ahead on %d/5 (need >= 4)", wins)};
}

// 12 --------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  RunConfig c;
  c.sim.num_users = 300;
  c.sim.num_rooms = 4;
  c.sim.horizon = 2 * 3600;
  c.sim.num_short_videos = 200;
  const fs::path root = fs::temp_directory_path() / "streamrank_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::vector<fs::path>> written;
  for (const char* run : {"a", "b"}) written.push_back(write_comparison(compare_policies(c), root / run));
  std::size_t differ = 0;
  for (std::size_t i = 0; i < written[0].size(); ++i) {
    differ += slurp(written[0][i]) != slurp(written[1][i]);
  }
  const bool ok = differ == 0 && written[0].size() == written[1].size() && !written[0].empty();
  fs::remove_all(root);
  return {ok, fmt("%zu report files compared, %zu differ", written[0].size(), differ)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;  // <= 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "pu-loss identity", 1.0, pu_identity},
      {2, "gradient checks", 60.0, gradient_checks},
      {3, "policy coverage oracle", 10.0, coverage_oracle},
      {4, "first-only property", 0.0, first_only},
      {5, "label consistency ordering", 30.0, table_one},
      {6, "detection lag, realtime vs fast_slow", 600.0, headline},
      {7, "metric oracles", 10.0, metric_oracles},
      {8, "gsu oracles", 30.0, gsu_oracles},
      {9, "attention properties", 0.0, attention_properties},
      {10, "contrastive alignment effect", 120.0, alignment},
      {11, "cross ablation direction", 0.0, cross_ablation},
      {12, "end-to-end determinism", 0.0, determinism},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_seconds <= 0 || secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::string timing = fmt("%.2fs", secs);
    if (c.limit_seconds > 0) timing += fmt(" (limit %.0fs)", c.limit_seconds);
    std::printf("[%s] %2d %s: %s; %s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d failed\n", failed);
  return failed == 0 ? 0 : 1;
}
