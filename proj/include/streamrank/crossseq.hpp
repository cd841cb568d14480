#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "streamrank/sim.hpp"
#include "streamrank/types.hpp"

namespace streamrank {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One past interaction from the interaction-log store.
struct HistoryItem {
  ItemId item_id = 0;
  Domain domain = Domain::kShortVideo;
  AuthorId author_id = 0;
  /// Time the interaction completed (session exit).
  Seconds timestamp = 0.0;
  /// Bit i set iff BehaviorKind(i) occurred.
  std::uint16_t behaviors = 0;
  /// Content tag (side information); 0 when unknown.
  std::uint32_t tag = 0;
  Vec embedding;

  bool has(BehaviorKind b) const { return (behaviors >> index(b)) & 1u; }
  void add(BehaviorKind b) { behaviors |= static_cast<std::uint16_t>(1u << index(b)); }
};

/// A GSU result: up to `capacity` items, most relevant first. Positions past
/// items.size() are padding (zero embedding, masked out).
struct Sequence {
  std::size_t capacity = 0;
  std::vector<HistoryItem> items;

  std::size_t valid() const { return items.size(); }
  /// capacity x dim, zero rows for padding.
  Mat stacked(std::size_t dim) const;
  std::vector<bool> mask() const;
};

enum class SequenceKind : std::uint8_t { kShort, kLong, kAidHard, kLiveLong, kMixed };
inline constexpr std::size_t kNumSequences = 5;
std::string_view to_string(SequenceKind k);
SequenceKind parse_sequence_kind(std::string_view s);

struct SequenceBundle {
  std::array<Sequence, kNumSequences> seqs;
  const Sequence& operator[](SequenceKind k) const { return seqs[static_cast<std::size_t>(k)]; }
  Sequence& operator[](SequenceKind k) { return seqs[static_cast<std::size_t>(k)]; }
};

struct CandidateContext {
  /// Concatenated live-side features, the attention query input.
  Vec live_side_embedding;
  /// The candidate's item embedding, used for dot-product search.
  Vec item_embedding;
  AuthorId author_id = 0;
};

// General search units. Inputs need not be sorted; recency ties are broken by
// item_id ascending.

/// The <= L most recent short-video items, newest first.
Sequence gsu_recent(std::span<const HistoryItem> history, std::size_t L);

/// Top-L items of `domain` by dot product with `candidate`; ties by recency
/// then item_id. Throws std::invalid_argument on dimension mismatch.
Sequence gsu_dot_topk(std::span<const HistoryItem> history, Domain domain, const Vec& candidate,
                      std::size_t L);

/// The <= L most recent short-video items by the given author.
Sequence gsu_hard_author(std::span<const HistoryItem> history, AuthorId author, std::size_t L);

/// The <= L most recent items of either domain carrying a long view.
Sequence gsu_mixed_longview(std::span<const HistoryItem> history, std::size_t L);

SequenceBundle build_bundle(std::span<const HistoryItem> history,
                            const CandidateContext& candidate, std::size_t L);

struct PoolResult {
  Vec vec;
  bool valid = false;
  /// Norm of the mean before normalization.
  double norm = 0.0;
};

/// Mean over valid rows, L2-normalized. Invalid (zero vector) when there are
/// no valid rows or the mean vanishes.
PoolResult pool_l2(const Sequence& seq, std::size_t dim);
PoolResult pool_l2(const Mat& rows, const std::vector<bool>& mask);
/// Gradient of a valid pool with respect to each valid row (identical for all
/// rows): (I - p p^T) d_pool / (norm * n).
Vec pool_l2_row_grad(const PoolResult& pool, std::size_t n_valid, const Vec& d_pool);

struct ContrastiveResult {
  double loss = 0.0;
  Mat grad_anchors;
  Mat grad_others;
};

/// Symmetric in-batch InfoNCE. Row i of `anchors` and row i of `others` are
/// the positive pair; other rows of the batch are negatives. The loss is the
/// mean of both directions. Throws std::invalid_argument if B < 2.
ContrastiveResult contrastive_align(const Mat& anchors, const Mat& others, double temperature);

struct AttentionProjections {
  Mat wq;  // candidate_dim x d
  Mat wk;  // item_dim x d
  Mat wv;  // item_dim x d
  std::size_t heads = 1;
};

struct AttentionResult {
  Vec output;
  /// L x heads attention weights; zero at padded positions.
  Mat weights;
  bool valid = false;
  // Forward cache for the backward pass.
  Vec query;
  Mat keys;
  Mat values;
};

/// Target-item attention: softmax((c Wq)(S Wk)^T / sqrt(d_head)) (S Wv), per
/// head, heads concatenated. All-padding input gives a zero vector, invalid.
AttentionResult esu_target_attention(const Vec& candidate, const Mat& seq,
                                     const std::vector<bool>& mask,
                                     const AttentionProjections& proj);

struct AttentionGrads {
  Vec d_candidate;
  Mat d_seq;
  Mat d_wq;
  Mat d_wk;
  Mat d_wv;
};

AttentionGrads esu_backward(const Vec& candidate, const Mat& seq, const std::vector<bool>& mask,
                            const AttentionProjections& proj, const AttentionResult& fwd,
                            const Vec& d_output);

/// Immutable per-user interaction history. Records are sorted by timestamp;
/// embeddings are not stored (the model materializes them).
class HistoryStore {
 public:
  HistoryStore() = default;

  void add(UserId user, HistoryItem item);
  /// Sorts every user's records; call once after the last add().
  void finalize();

  /// Records strictly before `as_of`.
  std::span<const HistoryItem> snapshot(UserId user, Seconds as_of) const;
  std::size_t users() const { return by_user_.size(); }
  std::size_t size() const;

  /// One record per completed session, stamped with its exit time.
  static HistoryStore from_events(std::span<const InteractionEvent> events,
                                  std::span<const RoomState> rooms,
                                  std::span<const ShortVideo> videos);

  void write_jsonl(std::ostream& os) const;
  static HistoryStore read_jsonl(std::istream& is);

 private:
  std::unordered_map<UserId, std::vector<HistoryItem>> by_user_;
};

nlohmann::json to_json(const HistoryItem& h, UserId user);

}  // namespace streamrank
