#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "streamrank/crossseq.hpp"
#include "streamrank/labels.hpp"
#include "streamrank/losses.hpp"
#include "streamrank/model.hpp"
#include "streamrank/sim.hpp"

namespace streamrank {

enum class ObjectiveMode : std::uint8_t {
  /// exit/fast flows: full log loss; slow flow: PU correction.
  kFastSlow,
  /// exit/rt_first/rt_exit flows: first-only masked log loss.
  kMoment,
};

std::string_view to_string(ObjectiveMode m);
ObjectiveMode parse_objective_mode(std::string_view s);

/// Picks the objective mode that consumes a policy's flows.
ObjectiveMode objective_for(ReportKind kind);

struct TrainerConfig {
  ObjectiveMode mode = ObjectiveMode::kMoment;
  /// > 0 groups samples whose report_ts fall in the same bucket into one
  /// averaged step; 0 steps once per sample.
  Seconds bucket_seconds = 0.0;
};

struct LossRecord {
  std::size_t step = 0;
  Seconds report_ts = 0.0;
  double loss = 0.0;
  PerTask<double> task_loss{};
};

/// Materializes FeatureVectors for (user, room, as_of) from the room catalog
/// and, when the model uses cross features, the history store.
class FeatureSource {
 public:
  FeatureSource(std::span<const RoomState> rooms, const HistoryStore* history = nullptr);

  FeatureVector features(UserId user, ItemId room, Seconds as_of) const;
  FeatureVector features(const TrainingSample& s) const {
    return features(s.user_id, s.item_id, s.as_of);
  }

 private:
  std::unordered_map<ItemId, std::pair<AuthorId, RoomCategory>> rooms_;
  const HistoryStore* history_;
};

/// Vocabulary covering users 1..num_users and every catalog entity.
Vocabulary make_vocabulary(std::size_t num_users, std::span<const RoomState> rooms,
                           std::span<const ShortVideo> videos);

/// Per-sample loss and logit gradients under the given objective. Throws
/// RoutingError when the sample's flow does not belong to the mode.
struct SampleObjective {
  double loss = 0.0;
  PerTask<double> task_loss{};
  PerTask<double> d_logits{};
};
SampleObjective sample_objective(const Prediction& pred, const TrainingSample& sample,
                                 ObjectiveMode mode);

/// Observers invoked as the simulated clock advances. on_snapshot(t, params)
/// fires for every grid time t = k * snapshot_interval in [first, last] once all
/// samples with report_ts <= t have been applied.
struct TrainHooks {
  Seconds snapshot_interval = 0.0;
  Seconds first_snapshot = 0.0;
  Seconds last_snapshot = 0.0;
  std::function<void(Seconds, const ModelParams&)> on_snapshot;
};

struct TrainResult {
  ModelParams params;
  std::vector<LossRecord> trace;
  double contrastive_loss_sum = 0.0;
  std::size_t contrastive_steps = 0;
};

/// Online SGD over a report_ts-sorted stream. Deterministic given the
/// initial parameters and the stream.
TrainResult train_stream(ModelParams params, std::span<const TrainingSample> samples,
                         const FeatureSource& features, const TrainerConfig& config,
                         const TrainHooks* hooks = nullptr);

/// A model state at a simulated time.
struct ParamSnapshot {
  Seconds t = 0.0;
  const ModelParams* params = nullptr;
};

struct SeriesPoint {
  Seconds t = 0.0;
  double value = 0.0;
};

/// Mean predicted click probability of `room` over the probe users, per snapshot.
double mean_click_probability(const ModelParams& params, const FeatureSource& features,
                              ItemId room, std::span<const UserId> probe_users, Seconds t);
std::vector<SeriesPoint> predict_ctr_series(std::span<const ParamSnapshot> snapshots,
                                            const FeatureSource& features, ItemId room,
                                            std::span<const UserId> probe_users);

/// Evenly spaced probe users from 1..num_users.
std::vector<UserId> probe_users(std::size_t num_users, std::size_t count);

void write_loss_trace_csv(std::ostream& os, std::span<const LossRecord> trace);

}  // namespace streamrank
