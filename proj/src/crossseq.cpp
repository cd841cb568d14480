#include "streamrank/crossseq.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

namespace streamrank {

using nlohmann::json;

Mat Sequence::stacked(std::size_t dim) const {
  Mat m = Mat::Zero(static_cast<Eigen::Index>(capacity), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (static_cast<std::size_t>(items[i].embedding.size()) != dim) {
      throw std::invalid_argument("Sequence::stacked: embedding dimension mismatch");
    }
    m.row(static_cast<Eigen::Index>(i)) = items[i].embedding.transpose();
  }
  return m;
}

std::vector<bool> Sequence::mask() const {
  std::vector<bool> m(capacity, false);
  std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(items.size()), true);
  return m;
}

std::string_view to_string(SequenceKind k) {
  switch (k) {
    case SequenceKind::kShort: return "short";
    case SequenceKind::kLong: return "long";
    case SequenceKind::kAidHard: return "aidhard";
    case SequenceKind::kLiveLong: return "livelong";
    default: return "mixed";
  }
}

SequenceKind parse_sequence_kind(std::string_view s) {
  for (std::size_t i = 0; i < kNumSequences; ++i) {
    auto k = static_cast<SequenceKind>(i);
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown sequence kind '" + std::string(s) + "'");
}

namespace {

bool more_recent(const HistoryItem& a, const HistoryItem& b) {
  if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;
  return a.item_id < b.item_id;
}

template <typename Pred>
Sequence recent_filtered(std::span<const HistoryItem> history, std::size_t L, Pred keep) {
  std::vector<const HistoryItem*> picked;
  for (const auto& h : history) {
    if (keep(h)) picked.push_back(&h);
  }
  const std::size_t n = std::min(L, picked.size());
  std::partial_sort(picked.begin(), picked.begin() + static_cast<std::ptrdiff_t>(n), picked.end(),
                    [](const HistoryItem* a, const HistoryItem* b) { return more_recent(*a, *b); });
  Sequence seq;
  seq.capacity = L;
  seq.items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) seq.items.push_back(*picked[i]);
  return seq;
}

}  // namespace

Sequence gsu_recent(std::span<const HistoryItem> history, std::size_t L) {
  return recent_filtered(history, L,
                         [](const HistoryItem& h) { return h.domain == Domain::kShortVideo; });
}

Sequence gsu_dot_topk(std::span<const HistoryItem> history, Domain domain, const Vec& candidate,
                      std::size_t L) {
  struct Scored {
    double score;
    const HistoryItem* item;
  };
  std::vector<Scored> scored;
  for (const auto& h : history) {
    if (h.domain != domain) continue;
    if (h.embedding.size() != candidate.size()) {
      throw std::invalid_argument("gsu_dot_topk: item " + std::to_string(h.item_id) +
                                  " embedding dimension " + std::to_string(h.embedding.size()) +
                                  " != candidate dimension " + std::to_string(candidate.size()));
    }
    scored.push_back({h.embedding.dot(candidate), &h});
  }
  const std::size_t n = std::min(L, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const Scored& a, const Scored& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return more_recent(*a.item, *b.item);
                    });
  Sequence seq;
  seq.capacity = L;
  seq.items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) seq.items.push_back(*scored[i].item);
  return seq;
}

Sequence gsu_hard_author(std::span<const HistoryItem> history, AuthorId author, std::size_t L) {
  return recent_filtered(history, L, [author](const HistoryItem& h) {
    return h.domain == Domain::kShortVideo && h.author_id == author;
  });
}

Sequence gsu_mixed_longview(std::span<const HistoryItem> history, std::size_t L) {
  return recent_filtered(history, L,
                         [](const HistoryItem& h) { return h.has(BehaviorKind::kLongView); });
}

SequenceBundle build_bundle(std::span<const HistoryItem> history,
                            const CandidateContext& candidate, std::size_t L) {
  SequenceBundle b;
  b[SequenceKind::kShort] = gsu_recent(history, L);
  b[SequenceKind::kLong] = gsu_dot_topk(history, Domain::kShortVideo, candidate.item_embedding, L);
  b[SequenceKind::kAidHard] = gsu_hard_author(history, candidate.author_id, L);
  b[SequenceKind::kLiveLong] = gsu_dot_topk(history, Domain::kLive, candidate.item_embedding, L);
  b[SequenceKind::kMixed] = gsu_mixed_longview(history, L);
  return b;
}

PoolResult pool_l2(const Mat& rows, const std::vector<bool>& mask) {
  PoolResult r;
  r.vec = Vec::Zero(rows.cols());
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (static_cast<std::size_t>(i) < mask.size() && mask[static_cast<std::size_t>(i)]) {
      r.vec += rows.row(i).transpose();
      ++n;
    }
  }
  if (n == 0) return r;
  r.vec /= static_cast<double>(n);
  r.norm = r.vec.norm();
  if (!(r.norm > 1e-12)) {
    r.vec.setZero();
    r.norm = 0.0;
    return r;
  }
  r.vec /= r.norm;
  r.valid = true;
  return r;
}

PoolResult pool_l2(const Sequence& seq, std::size_t dim) {
  return pool_l2(seq.stacked(dim), seq.mask());
}

Vec pool_l2_row_grad(const PoolResult& pool, std::size_t n_valid, const Vec& d_pool) {
  if (!pool.valid || n_valid == 0) return Vec::Zero(d_pool.size());
  const Vec& p = pool.vec;
  return (d_pool - p * p.dot(d_pool)) / (pool.norm * static_cast<double>(n_valid));
}

namespace {

/// Row-wise log-softmax.
Mat log_softmax_rows(const Mat& s) {
  Mat out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    const double lse = m + std::log((s.row(i).array() - m).exp().sum());
    out.row(i) = s.row(i).array() - lse;
  }
  return out;
}

}  // namespace

ContrastiveResult contrastive_align(const Mat& anchors, const Mat& others, double temperature) {
  const Eigen::Index B = anchors.rows();
  if (B < 2) throw std::invalid_argument("contrastive_align: batch size must be at least 2");
  if (others.rows() != B || others.cols() != anchors.cols()) {
    throw std::invalid_argument("contrastive_align: anchors and others shapes differ");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("contrastive_align: temperature must be > 0");
  const Mat sim = anchors * others.transpose() / temperature;
  const Mat lp_rows = log_softmax_rows(sim);                            // anchor -> others
  const Mat lp_cols = log_softmax_rows(sim.transpose()).transpose();    // other -> anchors
  ContrastiveResult r;
  double l1 = 0.0, l2 = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    l1 -= lp_rows(i, i);
    l2 -= lp_cols(i, i);
  }
  const double b = static_cast<double>(B);
  r.loss = 0.5 * (l1 / b + l2 / b);
  Mat d_sim = 0.5 * (lp_rows.array().exp().matrix() + lp_cols.array().exp().matrix()) / b;
  d_sim.diagonal().array() -= 1.0 / b;
  d_sim /= temperature;
  r.grad_anchors = d_sim * others;
  r.grad_others = d_sim.transpose() * anchors;
  return r;
}

AttentionResult esu_target_attention(const Vec& candidate, const Mat& seq,
                                     const std::vector<bool>& mask,
                                     const AttentionProjections& proj) {
  const Eigen::Index d = proj.wq.cols();
  const auto heads = static_cast<Eigen::Index>(proj.heads);
  if (heads <= 0 || d % heads != 0) {
    throw std::invalid_argument("esu_target_attention: head count must divide projection width");
  }
  if (candidate.size() != proj.wq.rows() || seq.cols() != proj.wk.rows() ||
      proj.wk.cols() != d || proj.wv.rows() != seq.cols() || proj.wv.cols() != d) {
    throw std::invalid_argument("esu_target_attention: projection dimensions are inconsistent");
  }
  if (static_cast<Eigen::Index>(mask.size()) != seq.rows()) {
    throw std::invalid_argument("esu_target_attention: mask length differs from sequence length");
  }
  const Eigen::Index L = seq.rows();
  const Eigen::Index dh = d / heads;
  AttentionResult r;
  r.output = Vec::Zero(d);
  r.weights = Mat::Zero(L, heads);
  r.query = proj.wq.transpose() * candidate;
  r.keys = seq * proj.wk;
  r.values = Mat::Zero(L, d);
  const auto first = std::find(mask.begin(), mask.end(), true);
  if (first == mask.end()) return r;
  r.valid = true;
  for (Eigen::Index i = 0; i < L; ++i) {
    if (mask[static_cast<std::size_t>(i)]) r.values.row(i) = seq.row(i) * proj.wv;
  }
  // Accumulate around the first valid value so single-item and identical-item
  // sequences reproduce the value projection bit for bit.
  const auto anchor = static_cast<Eigen::Index>(first - mask.begin());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto q = r.query.segment(h * dh, dh);
    double m = -std::numeric_limits<double>::infinity();
    Vec scores = Vec::Zero(L);
    for (Eigen::Index i = 0; i < L; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      scores(i) = r.keys.row(i).segment(h * dh, dh).dot(q) * scale;
      m = std::max(m, scores(i));
    }
    double z = 0.0;
    for (Eigen::Index i = 0; i < L; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      r.weights(i, h) = std::exp(scores(i) - m);
      z += r.weights(i, h);
    }
    r.weights.col(h) /= z;
    const Vec base = r.values.row(anchor).segment(h * dh, dh).transpose();
    Vec acc = Vec::Zero(dh);
    for (Eigen::Index i = 0; i < L; ++i) {
      if (!mask[static_cast<std::size_t>(i)] || i == anchor) continue;
      acc += r.weights(i, h) * (r.values.row(i).segment(h * dh, dh).transpose() - base);
    }
    r.output.segment(h * dh, dh) = base + acc;
  }
  return r;
}

AttentionGrads esu_backward(const Vec& candidate, const Mat& seq, const std::vector<bool>& mask,
                            const AttentionProjections& proj, const AttentionResult& fwd,
                            const Vec& d_output) {
  const Eigen::Index d = proj.wq.cols();
  const auto heads = static_cast<Eigen::Index>(proj.heads);
  const Eigen::Index dh = d / heads;
  const Eigen::Index L = seq.rows();
  AttentionGrads g;
  g.d_candidate = Vec::Zero(candidate.size());
  g.d_seq = Mat::Zero(seq.rows(), seq.cols());
  g.d_wq = Mat::Zero(proj.wq.rows(), proj.wq.cols());
  g.d_wk = Mat::Zero(proj.wk.rows(), proj.wk.cols());
  g.d_wv = Mat::Zero(proj.wv.rows(), proj.wv.cols());
  if (!fwd.valid) return g;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Vec d_query = Vec::Zero(d);
  Mat d_keys = Mat::Zero(L, d);
  Mat d_values = Mat::Zero(L, d);
  for (Eigen::Index h = 0; h < heads; ++h) {
    const auto dout = d_output.segment(h * dh, dh);
    const auto q = fwd.query.segment(h * dh, dh);
    Vec d_weight = Vec::Zero(L);
    double weighted = 0.0;
    for (Eigen::Index i = 0; i < L; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const double a = fwd.weights(i, h);
      d_values.row(i).segment(h * dh, dh) = a * dout.transpose();
      d_weight(i) = fwd.values.row(i).segment(h * dh, dh).dot(dout);
      weighted += a * d_weight(i);
    }
    for (Eigen::Index i = 0; i < L; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const double d_score = fwd.weights(i, h) * (d_weight(i) - weighted) * scale;
      d_query.segment(h * dh, dh) += d_score * fwd.keys.row(i).segment(h * dh, dh).transpose();
      d_keys.row(i).segment(h * dh, dh) = d_score * q.transpose();
    }
  }
  g.d_wq = candidate * d_query.transpose();
  g.d_candidate = proj.wq * d_query;
  g.d_wk = seq.transpose() * d_keys;
  g.d_wv = seq.transpose() * d_values;
  g.d_seq = d_keys * proj.wk.transpose() + d_values * proj.wv.transpose();
  return g;
}

void HistoryStore::add(UserId user, HistoryItem item) { by_user_[user].push_back(std::move(item)); }

void HistoryStore::finalize() {
  for (auto& [user, items] : by_user_) {
    std::stable_sort(items.begin(), items.end(), [](const HistoryItem& a, const HistoryItem& b) {
      if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
      return a.item_id < b.item_id;
    });
  }
}

std::span<const HistoryItem> HistoryStore::snapshot(UserId user, Seconds as_of) const {
  auto it = by_user_.find(user);
  if (it == by_user_.end()) return {};
  const auto& items = it->second;
  auto end = std::lower_bound(items.begin(), items.end(), as_of,
                              [](const HistoryItem& h, Seconds t) { return h.timestamp < t; });
  return {items.data(), static_cast<std::size_t>(end - items.begin())};
}

std::size_t HistoryStore::size() const {
  std::size_t n = 0;
  for (const auto& [u, items] : by_user_) n += items.size();
  return n;
}

HistoryStore HistoryStore::from_events(std::span<const InteractionEvent> events,
                                       std::span<const RoomState> rooms,
                                       std::span<const ShortVideo> videos) {
  std::unordered_map<ItemId, std::pair<AuthorId, std::uint32_t>> meta;
  for (const auto& r : rooms) meta[r.room_id] = {r.author_id, static_cast<std::uint32_t>(r.category)};
  for (const auto& v : videos) meta[v.video_id] = {v.author_id, v.tag};
  HistoryStore store;
  for (const auto& s : group_sessions(events)) {
    HistoryItem h;
    h.item_id = s.room_id;
    h.domain = s.domain;
    h.timestamp = s.exit;
    if (auto it = meta.find(s.room_id); it != meta.end()) {
      h.author_id = it->second.first;
      h.tag = it->second.second;
    }
    for (const auto& e : s.events) h.add(e.behavior);
    store.add(s.user_id, std::move(h));
  }
  store.finalize();
  return store;
}

json to_json(const HistoryItem& h, UserId user) {
  json behaviors = json::array();
  for (std::size_t b = 0; b < kNumBehaviors; ++b) {
    if (h.has(static_cast<BehaviorKind>(b))) behaviors.push_back(to_string(static_cast<BehaviorKind>(b)));
  }
  json j = {{"user_id", user},       {"item_id", h.item_id},     {"domain", to_string(h.domain)},
            {"author_id", h.author_id}, {"timestamp", h.timestamp}, {"behaviors", behaviors},
            {"tag", h.tag}};
  if (h.embedding.size() > 0) {
    j["embedding"] = std::vector<double>(h.embedding.data(), h.embedding.data() + h.embedding.size());
  }
  return j;
}

void HistoryStore::write_jsonl(std::ostream& os) const {
  std::vector<UserId> users;
  for (const auto& [u, items] : by_user_) users.push_back(u);
  std::sort(users.begin(), users.end());
  for (UserId u : users) {
    for (const auto& h : by_user_.at(u)) os << to_json(h, u).dump() << '\n';
  }
}

HistoryStore HistoryStore::read_jsonl(std::istream& is) {
  HistoryStore store;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      HistoryItem h;
      h.item_id = j.at("item_id").get<ItemId>();
      h.domain = parse_domain(j.at("domain").get<std::string>());
      h.author_id = j.value("author_id", AuthorId{0});
      h.timestamp = j.at("timestamp").get<double>();
      h.tag = j.value("tag", 0u);
      for (const auto& b : j.value("behaviors", json::array())) h.add(parse_behavior(b.get<std::string>()));
      if (j.contains("embedding")) {
        const auto v = j.at("embedding").get<std::vector<double>>();
        h.embedding = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
        if (!h.embedding.allFinite()) throw std::invalid_argument("non-finite embedding");
      }
      store.add(j.at("user_id").get<UserId>(), std::move(h));
    } catch (const std::exception& ex) {
      throw MalformedLogError("history line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  store.finalize();
  return store;
}

}  // namespace streamrank
