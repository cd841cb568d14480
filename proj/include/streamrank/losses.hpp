#pragma once

#include <span>

#include "streamrank/types.hpp"

namespace streamrank {

/// Per-task probabilities, each strictly inside (0, 1).
struct Prediction {
  PerTask<double> prob{};
};

/// Per-task exponents of the multiplicative ranking score; 1.0 by default.
struct RankWeights {
  PerTask<double> exponent{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
};

/// Fully observed multi-task log loss:
///   sum_t -[y_t log p_t + (1 - y_t) log(1 - p_t)].
double loss_fast(const Prediction& pred, const PerTask<std::uint8_t>& labels);

/// Positive-unlabeled correction for positives that arrived after a negative
/// had already been trained:  sum_{t in missing} -[log p_t - log(1 - p_t)].
/// Adding it to the earlier negative log loss gives exactly the positive log
/// loss. Throws std::invalid_argument if `missing` selects no task.
double loss_slow_pu(const Prediction& pred, const PerTask<bool>& missing);

/// Log loss restricted to the learnable tasks; masked tasks contribute
/// neither loss nor gradient.
double loss_moment(const Prediction& pred, const PerTask<std::uint8_t>& labels,
                   const PerTask<bool>& learn);

/// Gradients of the three losses with respect to each task's logit.
PerTask<double> loss_fast_logit_grad(const Prediction& pred, const PerTask<std::uint8_t>& labels);
PerTask<double> loss_slow_pu_logit_grad(const Prediction& pred, const PerTask<bool>& missing);
PerTask<double> loss_moment_logit_grad(const Prediction& pred,
                                       const PerTask<std::uint8_t>& labels,
                                       const PerTask<bool>& learn);

/// prod_t (1 + p_t)^w_t. Accepts the closed interval [0, 1] so that limit
/// cases can be scored. Throws std::invalid_argument on non-finite weights.
double ranking_score(const Prediction& pred, const RankWeights& weights);

/// Throws NumericError naming the first task whose probability is not in (0, 1).
void check_open_unit(const Prediction& pred);

}  // namespace streamrank
