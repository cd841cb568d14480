#include "streamrank/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "streamrank/rng.hpp"

namespace streamrank {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in host order and must be little-endian");

std::string_view to_string(Field f) {
  switch (f) {
    case Field::kUser: return "user";
    case Field::kRoom: return "room";
    case Field::kAuthor: return "author";
    case Field::kCategory: return "category";
    case Field::kVideo: return "video";
    default: return "tag";
  }
}

EmbeddingTable::EmbeddingTable(std::vector<std::uint64_t> ids, std::size_t dim)
    : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i + 1);
  weights = Mat::Zero(static_cast<Eigen::Index>(ids_.size() + 1), static_cast<Eigen::Index>(dim));
}

json to_json(const ModelHyper& h) {
  json enabled = json::object();
  for (std::size_t k = 0; k < kNumSequences; ++k) {
    enabled[std::string(to_string(static_cast<SequenceKind>(k)))] = h.sequence_enabled[k];
  }
  return {{"embedding_dim", h.embedding_dim},
          {"hidden", h.hidden},
          {"num_dense", h.num_dense},
          {"learning_rate", h.learning_rate},
          {"clip_norm", h.clip_norm},
          {"logit_clamp", h.logit_clamp},
          {"init_scale", h.init_scale},
          {"use_cross", h.use_cross},
          {"seq_len", h.seq_len},
          {"attention_dim", h.attention_dim},
          {"heads", h.heads},
          {"sequence_enabled", enabled},
          {"contrastive_weight", h.contrastive_weight},
          {"temperature", h.temperature},
          {"contrastive_batch", h.contrastive_batch}};
}

ModelHyper model_hyper_from_json(const json& j) {
  ModelHyper h;
  h.embedding_dim = j.value("embedding_dim", h.embedding_dim);
  h.hidden = j.value("hidden", h.hidden);
  h.num_dense = j.value("num_dense", h.num_dense);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.clip_norm = j.value("clip_norm", h.clip_norm);
  h.logit_clamp = j.value("logit_clamp", h.logit_clamp);
  h.init_scale = j.value("init_scale", h.init_scale);
  h.use_cross = j.value("use_cross", h.use_cross);
  h.seq_len = j.value("seq_len", h.seq_len);
  h.attention_dim = j.value("attention_dim", h.attention_dim);
  h.heads = j.value("heads", h.heads);
  if (j.contains("sequence_enabled")) {
    for (const auto& [k, v] : j.at("sequence_enabled").items()) {
      h.sequence_enabled[static_cast<std::size_t>(parse_sequence_kind(k))] = v.get<bool>();
    }
  }
  h.contrastive_weight = j.value("contrastive_weight", h.contrastive_weight);
  h.temperature = j.value("temperature", h.temperature);
  h.contrastive_batch = j.value("contrastive_batch", h.contrastive_batch);
  if (h.embedding_dim == 0 || h.hidden == 0) throw ConfigError("model dimensions must be positive");
  if (h.use_cross && (h.heads == 0 || h.attention_dim % h.heads != 0)) {
    throw ConfigError("heads must divide attention_dim");
  }
  return h;
}

std::size_t ModelParams::input_dim() const {
  std::size_t n = kNumSampleFields * hyper.embedding_dim + hyper.num_dense;
  if (hyper.use_cross) n += kNumSequences * hyper.attention_dim;
  return n;
}

namespace {

ModelParams shape(const ModelHyper& hyper, const Vocabulary& vocab) {
  ModelParams p;
  p.hyper = hyper;
  for (std::size_t f = 0; f < kNumFields; ++f) {
    p.tables[f] = EmbeddingTable(vocab.ids[f], hyper.embedding_dim);
  }
  const auto in = static_cast<Eigen::Index>(p.input_dim());
  const auto h = static_cast<Eigen::Index>(hyper.hidden);
  p.w1 = Mat::Zero(h, in);
  p.b1 = Vec::Zero(h);
  p.towers = Mat::Zero(static_cast<Eigen::Index>(kNumTasks), h);
  p.tower_bias = Vec::Zero(static_cast<Eigen::Index>(kNumTasks));
  const auto D = static_cast<Eigen::Index>(hyper.embedding_dim);
  const auto d = static_cast<Eigen::Index>(hyper.attention_dim);
  if (hyper.use_cross) {
    p.attention.wq = Mat::Zero(static_cast<Eigen::Index>(p.candidate_dim()), d);
    p.attention.wk = Mat::Zero(D, d);
    p.attention.wv = Mat::Zero(D, d);
  } else {
    p.attention.wq = Mat::Zero(0, 0);
    p.attention.wk = Mat::Zero(0, 0);
    p.attention.wv = Mat::Zero(0, 0);
  }
  p.attention.heads = hyper.heads;
  return p;
}

void fill_normal(Mat& m, double scale, Rng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * rng.normal();
  }
}

}  // namespace

ModelParams ModelParams::zeros(const ModelHyper& hyper, const Vocabulary& vocab) {
  return shape(hyper, vocab);
}

ModelParams ModelParams::init(const ModelHyper& hyper, const Vocabulary& vocab,
                              std::uint64_t seed) {
  ModelParams p = shape(hyper, vocab);
  for (std::size_t f = 0; f < kNumFields; ++f) {
    Rng rng(derive_seed(seed, {0x10, f}));
    fill_normal(p.tables[f].weights, hyper.init_scale, rng);
  }
  Rng rng(derive_seed(seed, {0x20}));
  fill_normal(p.w1, 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(p.w1.cols(), 1))), rng);
  if (hyper.use_cross) {
    Rng arng(derive_seed(seed, {0x30}));
    fill_normal(p.attention.wq, 1.0 / std::sqrt(static_cast<double>(p.attention.wq.rows())), arng);
    fill_normal(p.attention.wk, 1.0 / std::sqrt(static_cast<double>(p.attention.wk.rows())), arng);
    fill_normal(p.attention.wv, 1.0 / std::sqrt(static_cast<double>(p.attention.wv.rows())), arng);
  }
  return p;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tables) {
    if (!t.weights.allFinite()) return false;
  }
  return w1.allFinite() && b1.allFinite() && towers.allFinite() && tower_bias.allFinite() &&
         attention.wq.allFinite() && attention.wk.allFinite() && attention.wv.allFinite();
}

namespace {

Field item_table(Domain d) { return d == Domain::kLive ? Field::kRoom : Field::kVideo; }

}  // namespace

Vec history_embedding(const ModelParams& params, const HistoryItem& item) {
  const auto& items = params.tables[static_cast<std::size_t>(item_table(item.domain))];
  const auto& tags = params.tables[static_cast<std::size_t>(Field::kTag)];
  return items.weights.row(static_cast<Eigen::Index>(items.row_of(item.item_id))).transpose() +
         tags.weights.row(static_cast<Eigen::Index>(tags.row_of(tag_key(item.domain, item.tag))))
             .transpose();
}

CandidateContext candidate_context(const ModelParams& params, const FeatureVector& f,
                                   std::array<std::size_t, kNumSampleFields>& rows) {
  const auto D = static_cast<Eigen::Index>(params.hyper.embedding_dim);
  for (std::size_t k = 0; k < kNumSampleFields; ++k) rows[k] = params.tables[k].row_of(f.ids[k]);
  CandidateContext c;
  c.author_id = f.ids[static_cast<std::size_t>(Field::kAuthor)];
  c.live_side_embedding = Vec(3 * D);
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t field = static_cast<std::size_t>(Field::kRoom) + k;
    c.live_side_embedding.segment(static_cast<Eigen::Index>(k) * D, D) =
        params.tables[field].weights.row(static_cast<Eigen::Index>(rows[field])).transpose();
  }
  c.item_embedding = c.live_side_embedding.head(D);
  return c;
}

Prediction forward(const ModelParams& params, const FeatureVector& f, ForwardCache& cache) {
  const auto& hy = params.hyper;
  const auto D = static_cast<Eigen::Index>(hy.embedding_dim);
  if (f.dense.size() != hy.num_dense) {
    throw std::invalid_argument("forward: expected " + std::to_string(hy.num_dense) +
                                " dense features, got " + std::to_string(f.dense.size()));
  }
  cache.input = Vec::Zero(static_cast<Eigen::Index>(params.input_dim()));
  const CandidateContext cand = candidate_context(params, f, cache.rows);
  for (std::size_t k = 0; k < kNumSampleFields; ++k) {
    cache.input.segment(static_cast<Eigen::Index>(k) * D, D) =
        params.tables[k].weights.row(static_cast<Eigen::Index>(cache.rows[k])).transpose();
  }
  Eigen::Index off = static_cast<Eigen::Index>(kNumSampleFields) * D;
  for (double x : f.dense) {
    if (!std::isfinite(x)) throw NumericError("forward: non-finite dense feature");
    cache.input(off++) = x;
  }

  if (hy.use_cross) {
    cache.candidate = cand.live_side_embedding;
    std::vector<HistoryItem> history(f.history.begin(), f.history.end());
    for (auto& h : history) h.embedding = history_embedding(params, h);
    const SequenceBundle bundle = build_bundle(history, cand, hy.seq_len);
    const auto d = static_cast<Eigen::Index>(hy.attention_dim);
    const auto& tags = params.tables[static_cast<std::size_t>(Field::kTag)];
    for (std::size_t k = 0; k < kNumSequences; ++k) {
      auto& sc = cache.seqs[k];
      sc.enabled = hy.sequence_enabled[k];
      const Sequence& seq = bundle.seqs[k];
      sc.item_rows.clear();
      sc.item_tables.clear();
      sc.tag_rows.clear();
      for (const auto& item : seq.items) {
        const Field table = item_table(item.domain);
        sc.item_tables.push_back(table);
        sc.item_rows.push_back(params.tables[static_cast<std::size_t>(table)].row_of(item.item_id));
        sc.tag_rows.push_back(tags.row_of(tag_key(item.domain, item.tag)));
      }
      sc.stacked = seq.stacked(hy.embedding_dim);
      sc.mask = seq.mask();
      if (sc.enabled) {
        sc.attention = esu_target_attention(cache.candidate, sc.stacked, sc.mask, params.attention);
        cache.input.segment(off, d) = sc.attention.output;
      } else {
        sc.attention = AttentionResult{};
      }
      off += d;
    }
  }

  cache.hidden = (params.w1 * cache.input + params.b1).array().tanh().matrix();
  if (!cache.hidden.allFinite()) throw NumericError("forward: non-finite activation in trunk");
  Prediction pred;
  const Vec logits = params.towers * cache.hidden + params.tower_bias;
  for (Task t : kAllTasks) {
    const double z = logits(static_cast<Eigen::Index>(index(t)));
    if (!std::isfinite(z)) {
      throw NumericError("forward: non-finite logit in tower " + std::string(to_string(t)));
    }
    const double c = std::clamp(z, -hy.logit_clamp, hy.logit_clamp);
    cache.logits[index(t)] = c;
    cache.clamped[index(t)] = c != z;
    pred.prob[index(t)] = 1.0 / (1.0 + std::exp(-c));
  }
  return pred;
}

Prediction predict(const ModelParams& params, const FeatureVector& features) {
  ForwardCache cache;
  return forward(params, features, cache);
}

ModelGrad::ModelGrad(const ModelParams& p)
    : w1(Mat::Zero(p.w1.rows(), p.w1.cols())),
      b1(Vec::Zero(p.b1.size())),
      towers(Mat::Zero(p.towers.rows(), p.towers.cols())),
      tower_bias(Vec::Zero(p.tower_bias.size())),
      wq(Mat::Zero(p.attention.wq.rows(), p.attention.wq.cols())),
      wk(Mat::Zero(p.attention.wk.rows(), p.attention.wk.cols())),
      wv(Mat::Zero(p.attention.wv.rows(), p.attention.wv.cols())) {}

void ModelGrad::zero() {
  w1.setZero();
  b1.setZero();
  towers.setZero();
  tower_bias.setZero();
  wq.setZero();
  wk.setZero();
  wv.setZero();
  rows.clear();
}

void ModelGrad::add_row(Field table, std::size_t row, const Vec& g) {
  for (auto& r : rows) {
    if (r.table == table && r.row == row) {
      r.grad += g;
      return;
    }
  }
  rows.push_back({table, row, g});
}

double ModelGrad::squared_norm() const {
  double s = w1.squaredNorm() + b1.squaredNorm() + towers.squaredNorm() +
             tower_bias.squaredNorm() + wq.squaredNorm() + wk.squaredNorm() + wv.squaredNorm();
  for (const auto& r : rows) s += r.grad.squaredNorm();
  return s;
}

void ModelGrad::scale(double s) {
  w1 *= s;
  b1 *= s;
  towers *= s;
  tower_bias *= s;
  wq *= s;
  wk *= s;
  wv *= s;
  for (auto& r : rows) r.grad *= s;
}

void ModelGrad::add(const ModelGrad& o) {
  w1 += o.w1;
  b1 += o.b1;
  towers += o.towers;
  tower_bias += o.tower_bias;
  wq += o.wq;
  wk += o.wk;
  wv += o.wv;
  for (const auto& r : o.rows) add_row(r.table, r.row, r.grad);
}

void backward(const ModelParams& params, const ForwardCache& cache,
              const PerTask<double>& d_logits, ModelGrad& grad) {
  const auto& hy = params.hyper;
  const auto D = static_cast<Eigen::Index>(hy.embedding_dim);
  Vec dz(static_cast<Eigen::Index>(kNumTasks));
  for (Task t : kAllTasks) {
    dz(static_cast<Eigen::Index>(index(t))) = cache.clamped[index(t)] ? 0.0 : d_logits[index(t)];
  }
  grad.towers += dz * cache.hidden.transpose();
  grad.tower_bias += dz;
  const Vec d_hidden = params.towers.transpose() * dz;
  const Vec d_pre = d_hidden.array() * (1.0 - cache.hidden.array().square());
  grad.w1 += d_pre * cache.input.transpose();
  grad.b1 += d_pre;
  const Vec d_input = params.w1.transpose() * d_pre;

  for (std::size_t k = 0; k < kNumSampleFields; ++k) {
    grad.add_row(static_cast<Field>(k), cache.rows[k],
                 d_input.segment(static_cast<Eigen::Index>(k) * D, D));
  }
  if (!hy.use_cross) return;

  Eigen::Index off = static_cast<Eigen::Index>(kNumSampleFields * hy.embedding_dim + hy.num_dense);
  const auto d = static_cast<Eigen::Index>(hy.attention_dim);
  Vec d_candidate = Vec::Zero(cache.candidate.size());
  for (std::size_t k = 0; k < kNumSequences; ++k, off += d) {
    const auto& sc = cache.seqs[k];
    if (!sc.enabled || !sc.attention.valid) continue;
    const AttentionGrads g = esu_backward(cache.candidate, sc.stacked, sc.mask, params.attention,
                                          sc.attention, d_input.segment(off, d));
    d_candidate += g.d_candidate;
    grad.wq += g.d_wq;
    grad.wk += g.d_wk;
    grad.wv += g.d_wv;
    for (std::size_t i = 0; i < sc.item_rows.size(); ++i) {
      const Vec row = g.d_seq.row(static_cast<Eigen::Index>(i)).transpose();
      grad.add_row(sc.item_tables[i], sc.item_rows[i], row);
      grad.add_row(Field::kTag, sc.tag_rows[i], row);
    }
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t field = static_cast<std::size_t>(Field::kRoom) + k;
    grad.add_row(static_cast<Field>(field), cache.rows[field],
                 d_candidate.segment(static_cast<Eigen::Index>(k) * D, D));
  }
}

bool apply_sgd(ModelParams& params, ModelGrad& grad) {
  const double lr = params.hyper.learning_rate;
  const double n = std::sqrt(grad.squared_norm());
  if (!std::isfinite(n)) return false;
  if (params.hyper.clip_norm > 0.0 && n > params.hyper.clip_norm) grad.scale(params.hyper.clip_norm / n);
  params.w1 -= lr * grad.w1;
  params.b1 -= lr * grad.b1;
  params.towers -= lr * grad.towers;
  params.tower_bias -= lr * grad.tower_bias;
  if (params.hyper.use_cross) {
    params.attention.wq -= lr * grad.wq;
    params.attention.wk -= lr * grad.wk;
    params.attention.wv -= lr * grad.wv;
  }
  // A finite step keeps finite weights finite short of overflow, so only the
  // sparse rows (the ones that can grow unboundedly) are rechecked.
  bool finite = true;
  for (const auto& r : grad.rows) {
    auto row = params.tables[static_cast<std::size_t>(r.table)].weights.row(static_cast<Eigen::Index>(r.row));
    row -= lr * r.grad.transpose();
    finite = finite && row.allFinite();
  }
  return finite;
}

namespace {

template <typename M, typename V>
struct Blob {
  std::string name;
  M* m = nullptr;
  V* v = nullptr;
};

/// Parameter blobs in checkpoint order; constness follows the argument.
template <typename P>
auto blobs(P& p) {
  using M = std::conditional_t<std::is_const_v<P>, const Mat, Mat>;
  using V = std::conditional_t<std::is_const_v<P>, const Vec, Vec>;
  std::vector<Blob<M, V>> out;
  for (std::size_t f = 0; f < kNumFields; ++f) {
    out.push_back({"table." + std::string(to_string(static_cast<Field>(f))), &p.tables[f].weights, nullptr});
  }
  out.push_back({"w1", &p.w1, nullptr});
  out.push_back({"b1", nullptr, &p.b1});
  out.push_back({"towers", &p.towers, nullptr});
  out.push_back({"tower_bias", nullptr, &p.tower_bias});
  out.push_back({"attention.wq", &p.attention.wq, nullptr});
  out.push_back({"attention.wk", &p.attention.wk, nullptr});
  out.push_back({"attention.wv", &p.attention.wv, nullptr});
  return out;
}

}  // namespace

void save_checkpoint(std::ostream& os, const ModelParams& params) {
  json header;
  header["format"] = "streamrank-checkpoint";
  header["version"] = 1;
  header["hyper"] = to_json(params.hyper);
  json tables = json::array();
  for (std::size_t f = 0; f < kNumFields; ++f) {
    tables.push_back({{"field", to_string(static_cast<Field>(f))}, {"ids", params.tables[f].ids()}});
  }
  header["vocabulary"] = tables;
  json layout = json::array();
  for (const auto& b : blobs(params)) {
    const Eigen::Index r = b.m ? b.m->rows() : b.v->size();
    const Eigen::Index c = b.m ? b.m->cols() : 1;
    layout.push_back({{"name", b.name}, {"rows", r}, {"cols", c}});
  }
  header["blobs"] = layout;
  os << header.dump() << '\n';
  for (const auto& b : blobs(params)) {
    // Row-major on disk regardless of Eigen's storage order.
    if (b.m) {
      for (Eigen::Index i = 0; i < b.m->rows(); ++i) {
        for (Eigen::Index j = 0; j < b.m->cols(); ++j) {
          const double x = (*b.m)(i, j);
          os.write(reinterpret_cast<const char*>(&x), sizeof(double));
        }
      }
    } else {
      os.write(reinterpret_cast<const char*>(b.v->data()),
               static_cast<std::streamsize>(b.v->size() * sizeof(double)));
    }
  }
}

ModelParams load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("checkpoint: missing header");
  const json header = json::parse(line);
  if (header.value("format", "") != "streamrank-checkpoint") {
    throw std::runtime_error("checkpoint: unrecognized format");
  }
  const ModelHyper hyper = model_hyper_from_json(header.at("hyper"));
  Vocabulary vocab;
  for (std::size_t f = 0; f < kNumFields; ++f) {
    vocab.ids[f] = header.at("vocabulary").at(f).at("ids").get<std::vector<std::uint64_t>>();
  }
  ModelParams p = ModelParams::zeros(hyper, vocab);
  auto bs = blobs(p);
  const auto& layout = header.at("blobs");
  if (layout.size() != bs.size()) throw std::runtime_error("checkpoint: blob count mismatch");
  for (std::size_t k = 0; k < bs.size(); ++k) {
    const auto& b = bs[k];
    const auto rows = layout.at(k).at("rows").get<Eigen::Index>();
    const auto cols = layout.at(k).at("cols").get<Eigen::Index>();
    const Eigen::Index er = b.m ? b.m->rows() : b.v->size();
    const Eigen::Index ec = b.m ? b.m->cols() : 1;
    if (rows != er || cols != ec) throw std::runtime_error("checkpoint: shape mismatch in " + b.name);
    std::vector<double> buf(static_cast<std::size_t>(rows * cols));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated blob " + b.name);
    if (b.m) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) (*b.m)(i, j) = buf[static_cast<std::size_t>(i * cols + j)];
      }
    } else {
      for (Eigen::Index i = 0; i < rows; ++i) (*b.v)(i) = buf[static_cast<std::size_t>(i)];
    }
  }
  return p;
}

}  // namespace streamrank
