#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "streamrank/crossseq.hpp"
#include "streamrank/losses.hpp"
#include "streamrank/types.hpp"

namespace streamrank {

/// Embedding tables. The first four are the per-sample id fields; video and
/// tag embed history items.
enum class Field : std::uint8_t { kUser, kRoom, kAuthor, kCategory, kVideo, kTag };
inline constexpr std::size_t kNumSampleFields = 4;
inline constexpr std::size_t kNumFields = 6;
std::string_view to_string(Field f);

/// Tag keys are namespaced by domain so live categories and video tags differ.
constexpr std::uint64_t tag_key(Domain d, std::uint32_t tag) {
  return (d == Domain::kLive ? (std::uint64_t{1} << 32) : 0) + tag;
}

/// Fixed id -> row map; row 0 is the shared out-of-vocabulary row.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::uint64_t> ids, std::size_t dim);

  std::size_t row_of(std::uint64_t id) const {
    auto it = index_.find(id);
    return it == index_.end() ? 0 : it->second;
  }
  const std::vector<std::uint64_t>& ids() const { return ids_; }
  std::size_t rows() const { return static_cast<std::size_t>(weights.rows()); }

  Mat weights;

 private:
  std::vector<std::uint64_t> ids_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

struct ModelHyper {
  std::size_t embedding_dim = 16;
  std::size_t hidden = 16;
  std::size_t num_dense = 0;
  double learning_rate = 0.05;
  /// Global gradient-norm clip; <= 0 disables.
  double clip_norm = 10.0;
  double logit_clamp = 15.0;
  double init_scale = 0.05;

  bool use_cross = false;
  std::size_t seq_len = 50;
  std::size_t attention_dim = 16;
  std::size_t heads = 1;
  /// Ablation switches, indexed by SequenceKind.
  std::array<bool, kNumSequences> sequence_enabled{true, true, true, true, true};
  double contrastive_weight = 0.1;
  double temperature = 0.1;
  std::size_t contrastive_batch = 64;
};

nlohmann::json to_json(const ModelHyper& h);
ModelHyper model_hyper_from_json(const nlohmann::json& j);

struct FeatureVector {
  /// Indexed by Field for the first kNumSampleFields fields.
  std::array<std::uint64_t, kNumSampleFields> ids{};
  std::vector<double> dense;
  /// History snapshot for cross features; ignored unless the model uses them.
  std::span<const HistoryItem> history;
};

struct Vocabulary {
  std::array<std::vector<std::uint64_t>, kNumFields> ids;
};

struct ModelParams {
  ModelHyper hyper;
  std::array<EmbeddingTable, kNumFields> tables;
  Mat w1;  // hidden x input
  Vec b1;
  Mat towers;  // tasks x hidden
  Vec tower_bias;
  AttentionProjections attention;

  /// Small random embeddings and trunk, zero towers. Deterministic in seed.
  static ModelParams init(const ModelHyper& hyper, const Vocabulary& vocab, std::uint64_t seed);
  /// Every parameter zero.
  static ModelParams zeros(const ModelHyper& hyper, const Vocabulary& vocab);

  std::size_t input_dim() const;
  std::size_t candidate_dim() const { return 3 * hyper.embedding_dim; }
  bool all_finite() const;
};

/// Everything backward() needs from one forward pass.
struct ForwardCache {
  std::array<std::size_t, kNumSampleFields> rows{};
  Vec input;
  Vec hidden;  // tanh output
  PerTask<double> logits{};
  PerTask<bool> clamped{};
  // Cross features.
  struct SeqCache {
    std::vector<std::size_t> item_rows;  // row in the item's table
    std::vector<Field> item_tables;
    std::vector<std::size_t> tag_rows;
    Mat stacked;
    std::vector<bool> mask;
    AttentionResult attention;
    bool enabled = false;
  };
  Vec candidate;
  std::array<SeqCache, kNumSequences> seqs;
};

/// Materialized item embedding (item row + tag row) of a history item.
Vec history_embedding(const ModelParams& params, const HistoryItem& item);

CandidateContext candidate_context(const ModelParams& params, const FeatureVector& f,
                                   std::array<std::size_t, kNumSampleFields>& rows);

Prediction predict(const ModelParams& params, const FeatureVector& features);
Prediction forward(const ModelParams& params, const FeatureVector& features, ForwardCache& cache);

struct ModelGrad {
  Mat w1;
  Vec b1;
  Mat towers;
  Vec tower_bias;
  Mat wq, wk, wv;
  struct RowGrad {
    Field table;
    std::size_t row;
    Vec grad;
  };
  std::vector<RowGrad> rows;

  explicit ModelGrad(const ModelParams& p);
  void zero();
  void add_row(Field table, std::size_t row, const Vec& g);
  double squared_norm() const;
  void scale(double s);
  void add(const ModelGrad& other);
};

/// Accumulates into `grad` the gradient of a loss whose logit gradients are
/// `d_logits` (logit clamping is honored).
void backward(const ModelParams& params, const ForwardCache& cache, const PerTask<double>& d_logits,
              ModelGrad& grad);

/// Clips by global norm (hyper.clip_norm) and takes one SGD step. Returns
/// false, without stepping, on a non-finite gradient, and false after the
/// step if an updated embedding row overflowed.
bool apply_sgd(ModelParams& params, ModelGrad& grad);

/// Flat binary/JSON hybrid: one JSON header line (schema), then raw
/// little-endian float64 blobs in header order.
void save_checkpoint(std::ostream& os, const ModelParams& params);
ModelParams load_checkpoint(std::istream& is);

}  // namespace streamrank
