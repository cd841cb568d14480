#include "streamrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace streamrank {

using nlohmann::json;

namespace {

struct Scored {
  double score;
  bool positive;
};

/// AUC of a run already sorted by score, with midranks for ties.
std::optional<double> sorted_auc(std::span<const Scored> v) {
  std::size_t pos = 0;
  for (const auto& e : v) pos += e.positive;
  const std::size_t neg = v.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  // Sum of positive midranks (1-based).
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    std::size_t tied_pos = 0;
    while (j < v.size() && v[j].score == v[i].score) tied_pos += v[j++].positive;
    rank_sum += 0.5 * static_cast<double>(i + 1 + j) * static_cast<double>(tied_pos);
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

void check_finite(std::span<const ScoredExample> ex, const char* who) {
  for (const auto& e : ex) {
    if (!std::isfinite(e.score)) throw std::invalid_argument(std::string(who) + ": non-finite score");
  }
}

}  // namespace

std::optional<double> auc(std::span<const ScoredExample> ex) {
  check_finite(ex, "auc");
  std::vector<Scored> v;
  v.reserve(ex.size());
  for (const auto& e : ex) v.push_back({e.score, e.label != 0});
  std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  return sorted_auc(v);
}

std::optional<double> gauc(std::span<const ScoredExample> ex) {
  check_finite(ex, "gauc");
  std::vector<std::size_t> order(ex.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ex[a].user_id != ex[b].user_id ? ex[a].user_id < ex[b].user_id : ex[a].score < ex[b].score;
  });
  std::vector<Scored> v;
  v.reserve(ex.size());
  for (std::size_t i : order) v.push_back({ex[i].score, ex[i].label != 0});
  double num = 0.0;
  double den = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && ex[order[j]].user_id == ex[order[i]].user_id) ++j;
    if (const auto a = sorted_auc(std::span<const Scored>(v).subspan(i, j - i))) {
      const double w = static_cast<double>(j - i);
      num += w * *a;
      den += w;
    }
    i = j;
  }
  if (den == 0.0) return std::nullopt;
  return num / den;
}

std::vector<ConsistencyRow> consistency_table(std::span<const TrainingSample> fast_samples,
                                              const PerTask<std::size_t>& slow_counts) {
  PerTask<std::size_t> fast{};
  for (const auto& s : fast_samples) {
    if (s.flow != Flow::kFast) continue;
    for (Task t : kAllTasks) fast[index(t)] += s.labels[index(t)] != 0;
  }
  std::vector<ConsistencyRow> rows;
  for (Task t : kAllTasks) {
    ConsistencyRow r;
    r.task = t;
    r.fast_positive_count = fast[index(t)];
    r.slow_window_positive_count = slow_counts[index(t)];
    if (r.slow_window_positive_count > 0) {
      r.consistency = static_cast<double>(r.fast_positive_count) /
                      static_cast<double>(r.slow_window_positive_count);
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<ConsistencyRow> consistency_table(std::span<const SessionRecord> sessions,
                                              Seconds fast_window, Seconds slow_window) {
  const auto fast = assemble_sessions(sessions, ReportPolicy::fast_slow(fast_window, slow_window));
  return consistency_table(fast, slow_window_positive_counts(sessions, slow_window));
}

LagResult detection_lag(std::span<const SeriesPoint> pred, std::span<const SeriesPoint> truth,
                        std::span<const Seconds> onsets, const LagConfig& cfg) {
  if (pred.empty()) throw std::invalid_argument("detection_lag: empty predicted series");
  if (onsets.empty()) throw std::invalid_argument("detection_lag: no onsets");
  if (!truth.empty()) {
    if (truth.size() != pred.size()) {
      throw std::invalid_argument("detection_lag: series lengths differ");
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (std::abs(truth[i].t - pred[i].t) > 1e-9) {
        throw std::invalid_argument("detection_lag: series grids differ");
      }
    }
  }
  const Seconds end = pred.back().t;
  LagResult res;
  double sum = 0.0;
  for (Seconds onset : onsets) {
    OnsetLag ol{onset, std::max(0.0, end - onset), false};
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (const auto& p : pred) {
      if (p.t >= onset - cfg.baseline_window && p.t < onset) {
        s += p.value;
        s2 += p.value * p.value;
        ++n;
      }
    }
    if (n > 0) {
      const double mean = s / static_cast<double>(n);
      const double var = std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
      const double thr = mean + cfg.k * std::max(std::sqrt(var), cfg.std_floor);
      for (const auto& p : pred) {
        if (p.t >= onset && p.value > thr) {
          ol.lag = p.t - onset;
          ol.detected = true;
          break;
        }
      }
    }
    sum += ol.lag;
    res.onsets.push_back(ol);
  }
  res.mean_lag = sum / static_cast<double>(onsets.size());
  return res;
}

std::vector<ScoredExample> scored_examples(std::span<const EvalRecord> records, Task task) {
  std::vector<ScoredExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({r.user_id, r.prediction.prob[index(task)], r.labels[index(task)], task});
  }
  return out;
}

std::vector<TaskMetrics> task_metrics(std::span<const EvalRecord> records) {
  std::vector<TaskMetrics> out;
  for (Task t : kAllTasks) {
    const auto ex = scored_examples(records, t);
    TaskMetrics m;
    m.task = t;
    m.examples = ex.size();
    double sp = 0.0;
    for (const auto& e : ex) {
      m.positives += e.label != 0;
      sp += e.score;
    }
    m.auc = auc(ex);
    m.gauc = gauc(ex);
    if (!ex.empty()) {
      m.mean_prediction = sp / static_cast<double>(ex.size());
      if (m.positives > 0) {
        m.calibration_ratio =
            m.mean_prediction / (static_cast<double>(m.positives) / static_cast<double>(ex.size()));
      }
    }
    out.push_back(m);
  }
  return out;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json to_json(const ConsistencyRow& r) {
  return {{"task", to_string(r.task)},
          {"fast_positive_count", r.fast_positive_count},
          {"slow_window_positive_count", r.slow_window_positive_count},
          {"consistency", opt_json(r.consistency)}};
}

json to_json(const TaskMetrics& m) {
  return {{"task", to_string(m.task)},          {"examples", m.examples},
          {"positives", m.positives},           {"auc", opt_json(m.auc)},
          {"gauc", opt_json(m.gauc)},           {"mean_prediction", m.mean_prediction},
          {"calibration_ratio", opt_json(m.calibration_ratio)}};
}

json to_json(const LagResult& r) {
  json onsets = json::array();
  for (const auto& o : r.onsets) {
    onsets.push_back({{"onset", o.onset}, {"lag", o.lag}, {"detected", o.detected}});
  }
  return {{"mean_lag", r.mean_lag}, {"onsets", onsets}};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void write_consistency_csv(std::ostream& os, std::span<const ConsistencyRow> rows) {
  os << "task,fast_positive_count,slow_window_positive_count,consistency\n";
  for (const auto& r : rows) {
    os << to_string(r.task) << ',' << r.fast_positive_count << ',' << r.slow_window_positive_count
       << ',' << fmt(r.consistency) << '\n';
  }
}

void write_task_metrics_csv(std::ostream& os, std::span<const TaskMetrics> rows) {
  os << "task,examples,positives,auc,gauc,mean_prediction,calibration_ratio\n";
  for (const auto& m : rows) {
    os << to_string(m.task) << ',' << m.examples << ',' << m.positives << ',' << fmt(m.auc) << ','
       << fmt(m.gauc) << ',' << fmt(m.mean_prediction) << ',' << fmt(m.calibration_ratio) << '\n';
  }
}

void write_series_csv(std::ostream& os, std::span<const SeriesPoint> pred,
                      std::span<const SeriesPoint> truth) {
  os << "t,predicted_ctr,attractiveness\n";
  for (std::size_t i = 0; i < pred.size(); ++i) {
    os << fmt(pred[i].t) << ',' << fmt(pred[i].value) << ','
       << (i < truth.size() ? fmt(truth[i].value) : std::string()) << '\n';
  }
}

}  // namespace streamrank
