#include "streamrank/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <set>

namespace streamrank {

std::string_view to_string(ObjectiveMode m) {
  return m == ObjectiveMode::kFastSlow ? "fast_slow" : "moment";
}

ObjectiveMode parse_objective_mode(std::string_view s) {
  if (s == "fast_slow") return ObjectiveMode::kFastSlow;
  if (s == "moment") return ObjectiveMode::kMoment;
  throw ConfigError("unknown objective mode: " + std::string(s));
}

ObjectiveMode objective_for(ReportKind kind) {
  // exit_report samples carry no masks; both modes accept them.
  return kind == ReportKind::kRealtime ? ObjectiveMode::kMoment : ObjectiveMode::kFastSlow;
}

FeatureSource::FeatureSource(std::span<const RoomState> rooms, const HistoryStore* history)
    : history_(history) {
  for (const auto& r : rooms) rooms_[r.room_id] = {r.author_id, r.category};
}

FeatureVector FeatureSource::features(UserId user, ItemId room, Seconds as_of) const {
  FeatureVector f;
  f.ids[static_cast<std::size_t>(Field::kUser)] = user;
  f.ids[static_cast<std::size_t>(Field::kRoom)] = room;
  auto it = rooms_.find(room);
  if (it != rooms_.end()) {
    f.ids[static_cast<std::size_t>(Field::kAuthor)] = it->second.first;
    f.ids[static_cast<std::size_t>(Field::kCategory)] =
        static_cast<std::uint64_t>(it->second.second);
  } else {
    // Unknown room: out-of-vocabulary ids everywhere but the user.
    f.ids[static_cast<std::size_t>(Field::kAuthor)] = ~std::uint64_t{0};
    f.ids[static_cast<std::size_t>(Field::kCategory)] = ~std::uint64_t{0};
  }
  if (history_ != nullptr) f.history = history_->snapshot(user, as_of);
  return f;
}

Vocabulary make_vocabulary(std::size_t num_users, std::span<const RoomState> rooms,
                           std::span<const ShortVideo> videos) {
  Vocabulary v;
  auto& users = v.ids[static_cast<std::size_t>(Field::kUser)];
  for (std::uint64_t u = 1; u <= num_users; ++u) users.push_back(u);
  std::set<std::uint64_t> room_ids, authors, cats, vids, tags;
  for (const auto& r : rooms) {
    room_ids.insert(r.room_id);
    authors.insert(r.author_id);
    cats.insert(static_cast<std::uint64_t>(r.category));
    tags.insert(tag_key(Domain::kLive, static_cast<std::uint32_t>(r.category)));
  }
  for (const auto& s : videos) {
    vids.insert(s.video_id);
    tags.insert(tag_key(Domain::kShortVideo, s.tag));
  }
  v.ids[static_cast<std::size_t>(Field::kRoom)].assign(room_ids.begin(), room_ids.end());
  v.ids[static_cast<std::size_t>(Field::kAuthor)].assign(authors.begin(), authors.end());
  v.ids[static_cast<std::size_t>(Field::kCategory)].assign(cats.begin(), cats.end());
  v.ids[static_cast<std::size_t>(Field::kVideo)].assign(vids.begin(), vids.end());
  v.ids[static_cast<std::size_t>(Field::kTag)].assign(tags.begin(), tags.end());
  return v;
}

namespace {

[[noreturn]] void routing_error(const TrainingSample& s, ObjectiveMode mode) {
  throw RoutingError("session " + std::to_string(s.session_id) + ": flow '" +
                     std::string(to_string(s.flow)) + "' is not accepted in " +
                     std::string(to_string(mode)) + " mode");
}

double task_logloss(double p, std::uint8_t y) {
  return y != 0 ? -std::log(p) : -std::log1p(-p);
}

}  // namespace

SampleObjective sample_objective(const Prediction& pred, const TrainingSample& s,
                                 ObjectiveMode mode) {
  check_open_unit(pred);
  SampleObjective out;
  const auto& p = pred.prob;
  if (mode == ObjectiveMode::kFastSlow) {
    switch (s.flow) {
      case Flow::kExit:
      case Flow::kFast:
        for (Task t : kAllTasks) {
          const auto i = index(t);
          out.task_loss[i] = task_logloss(p[i], s.labels[i]);
          out.d_logits[i] = p[i] - (s.labels[i] != 0 ? 1.0 : 0.0);
        }
        break;
      case Flow::kSlow: {
        bool any = false;
        for (Task t : kAllTasks) {
          const auto i = index(t);
          if (!s.learn[i]) continue;
          any = true;
          out.task_loss[i] = -(std::log(p[i]) - std::log1p(-p[i]));
          out.d_logits[i] = -1.0;
        }
        if (!any) throw RoutingError("session " + std::to_string(s.session_id) +
                                     ": slow sample with no unmasked task");
        break;
      }
      default:
        routing_error(s, mode);
    }
  } else {
    switch (s.flow) {
      case Flow::kExit:
      case Flow::kRtFirst:
      case Flow::kRtExit:
        for (Task t : kAllTasks) {
          const auto i = index(t);
          if (!s.learn[i]) continue;
          out.task_loss[i] = task_logloss(p[i], s.labels[i]);
          out.d_logits[i] = p[i] - (s.labels[i] != 0 ? 1.0 : 0.0);
        }
        break;
      default:
        routing_error(s, mode);
    }
  }
  for (double l : out.task_loss) out.loss += l;
  return out;
}

namespace {

/// Row references of one retrieved sequence, enough to rebuild its pool from
/// the current parameters.
struct SeqRefs {
  std::vector<Field> tables;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> tag_rows;
};

using BundleRefs = std::array<SeqRefs, kNumSequences>;

BundleRefs refs_of(const ForwardCache& cache) {
  BundleRefs b;
  for (std::size_t k = 0; k < kNumSequences; ++k) {
    b[k].tables = cache.seqs[k].item_tables;
    b[k].rows = cache.seqs[k].item_rows;
    b[k].tag_rows = cache.seqs[k].tag_rows;
  }
  return b;
}

PoolResult pool_refs(const ModelParams& p, const SeqRefs& r) {
  const auto D = static_cast<Eigen::Index>(p.hyper.embedding_dim);
  Mat m(static_cast<Eigen::Index>(r.rows.size()), D);
  const auto& tags = p.tables[static_cast<std::size_t>(Field::kTag)].weights;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& tab = p.tables[static_cast<std::size_t>(r.tables[i])].weights;
    m.row(static_cast<Eigen::Index>(i)) =
        tab.row(static_cast<Eigen::Index>(r.rows[i])) + tags.row(static_cast<Eigen::Index>(r.tag_rows[i]));
  }
  return pool_l2(m, std::vector<bool>(r.rows.size(), true));
}

void backprop_pool(const PoolResult& pool, const SeqRefs& r, const Vec& d_pool, ModelGrad& g) {
  const Vec row = pool_l2_row_grad(pool, r.rows.size(), d_pool);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    g.add_row(r.tables[i], r.rows[i], row);
    g.add_row(Field::kTag, r.tag_rows[i], row);
  }
}

/// One weighted step on the four alignment terms over the buffered batch.
/// Returns the (unweighted) summed loss, or nullopt if no term had >= 2 rows.
std::optional<double> contrastive_step(ModelParams& params, const std::deque<BundleRefs>& batch) {
  const auto& hy = params.hyper;
  const std::size_t mixed = static_cast<std::size_t>(SequenceKind::kMixed);
  if (!hy.sequence_enabled[mixed]) return std::nullopt;
  std::vector<PoolResult> anchors;
  anchors.reserve(batch.size());
  for (const auto& b : batch) anchors.push_back(pool_refs(params, b[mixed]));

  ModelGrad grad(params);
  double total = 0.0;
  bool any = false;
  for (std::size_t k = 0; k < kNumSequences; ++k) {
    if (k == mixed || !hy.sequence_enabled[k]) continue;
    std::vector<std::size_t> idx;
    std::vector<PoolResult> others;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      PoolResult o = pool_refs(params, batch[i][k]);
      if (anchors[i].valid && o.valid) {
        idx.push_back(i);
        others.push_back(std::move(o));
      }
    }
    if (idx.size() < 2) continue;
    const auto B = static_cast<Eigen::Index>(idx.size());
    const auto D = static_cast<Eigen::Index>(hy.embedding_dim);
    Mat a(B, D), o(B, D);
    for (Eigen::Index i = 0; i < B; ++i) {
      a.row(i) = anchors[idx[static_cast<std::size_t>(i)]].vec.transpose();
      o.row(i) = others[static_cast<std::size_t>(i)].vec.transpose();
    }
    const ContrastiveResult cr = contrastive_align(a, o, hy.temperature);
    total += cr.loss;
    any = true;
    for (Eigen::Index i = 0; i < B; ++i) {
      const std::size_t s = idx[static_cast<std::size_t>(i)];
      backprop_pool(anchors[s], batch[s][mixed], cr.grad_anchors.row(i).transpose(), grad);
      backprop_pool(others[static_cast<std::size_t>(i)], batch[s][k], cr.grad_others.row(i).transpose(),
                    grad);
    }
  }
  if (!any) return std::nullopt;
  grad.scale(hy.contrastive_weight);
  if (!apply_sgd(params, grad)) throw NumericError("train_stream: non-finite parameters after contrastive step");
  return total;
}

}  // namespace

TrainResult train_stream(ModelParams params, std::span<const TrainingSample> samples,
                         const FeatureSource& features, const TrainerConfig& config,
                         const TrainHooks* hooks) {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].report_ts < samples[i - 1].report_ts) {
      throw std::invalid_argument("train_stream: samples not sorted by report_ts at index " +
                                  std::to_string(i));
    }
  }
  TrainResult res;
  const bool snap = hooks != nullptr && hooks->snapshot_interval > 0.0 && hooks->on_snapshot;
  Seconds next_snap = 0.0;
  if (snap) {
    next_snap = std::ceil(hooks->first_snapshot / hooks->snapshot_interval) * hooks->snapshot_interval;
  }
  auto flush_snapshots = [&](Seconds upto) {
    // Fires every grid time strictly before `upto`.
    if (!snap) return;
    while (next_snap <= hooks->last_snapshot && next_snap < upto) {
      hooks->on_snapshot(next_snap, params);
      next_snap += hooks->snapshot_interval;
    }
  };

  const bool cross = params.hyper.use_cross && params.hyper.contrastive_weight > 0.0;
  std::deque<BundleRefs> buffer;
  std::size_t since_contrastive = 0;

  ModelGrad grad(params);
  std::size_t i = 0;
  while (i < samples.size()) {
    std::size_t j = i + 1;
    if (config.bucket_seconds > 0.0) {
      const double b = std::floor(samples[i].report_ts / config.bucket_seconds);
      while (j < samples.size() && std::floor(samples[j].report_ts / config.bucket_seconds) == b) ++j;
    }
    flush_snapshots(samples[i].report_ts);

    grad.zero();
    LossRecord rec;
    rec.step = res.trace.size();
    rec.report_ts = samples[j - 1].report_ts;
    for (std::size_t k = i; k < j; ++k) {
      const TrainingSample& s = samples[k];
      const FeatureVector f = features.features(s);
      ForwardCache cache;
      const Prediction pred = forward(params, f, cache);
      const SampleObjective obj = sample_objective(pred, s, config.mode);
      backward(params, cache, obj.d_logits, grad);
      rec.loss += obj.loss;
      for (std::size_t t = 0; t < kNumTasks; ++t) rec.task_loss[t] += obj.task_loss[t];
      if (cross) {
        buffer.push_back(refs_of(cache));
        if (buffer.size() > params.hyper.contrastive_batch) buffer.pop_front();
        ++since_contrastive;
      }
    }
    const double n = static_cast<double>(j - i);
    if (n > 1.0) {
      grad.scale(1.0 / n);
      rec.loss /= n;
      for (double& l : rec.task_loss) l /= n;
    }
    if (!apply_sgd(params, grad)) {
      throw NumericError("train_stream: non-finite parameters after step " + std::to_string(rec.step));
    }
    res.trace.push_back(rec);

    if (cross && since_contrastive >= params.hyper.contrastive_batch) {
      since_contrastive = 0;
      if (auto l = contrastive_step(params, buffer)) {
        res.contrastive_loss_sum += *l;
        ++res.contrastive_steps;
      }
    }
    i = j;
  }
  if (snap) {
    while (next_snap <= hooks->last_snapshot) {
      hooks->on_snapshot(next_snap, params);
      next_snap += hooks->snapshot_interval;
    }
  }
  res.params = std::move(params);
  return res;
}

double mean_click_probability(const ModelParams& params, const FeatureSource& features, ItemId room,
                              std::span<const UserId> probe_users, Seconds t) {
  if (probe_users.empty()) return 0.0;
  double sum = 0.0;
  for (UserId u : probe_users) {
    sum += predict(params, features.features(u, room, t)).prob[index(Task::kClick)];
  }
  return sum / static_cast<double>(probe_users.size());
}

std::vector<SeriesPoint> predict_ctr_series(std::span<const ParamSnapshot> snapshots,
                                            const FeatureSource& features, ItemId room,
                                            std::span<const UserId> probe_users) {
  std::vector<SeriesPoint> out;
  out.reserve(snapshots.size());
  for (const auto& s : snapshots) {
    out.push_back({s.t, mean_click_probability(*s.params, features, room, probe_users, s.t)});
  }
  return out;
}

std::vector<UserId> probe_users(std::size_t num_users, std::size_t count) {
  std::vector<UserId> out;
  if (num_users == 0 || count == 0) return out;
  count = std::min(count, num_users);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(1 + k * num_users / count);
  }
  return out;
}

void write_loss_trace_csv(std::ostream& os, std::span<const LossRecord> trace) {
  os << "step,report_ts,loss";
  for (Task t : kAllTasks) os << ",loss_" << to_string(t);
  os << '\n';
  char buf[64];
  for (const auto& r : trace) {
    os << r.step;
    std::snprintf(buf, sizeof buf, ",%.3f,%.17g", r.report_ts, r.loss);
    os << buf;
    for (double l : r.task_loss) {
      std::snprintf(buf, sizeof buf, ",%.17g", l);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace streamrank
