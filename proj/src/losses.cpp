#include "streamrank/losses.hpp"

#include <cmath>
#include <string>

namespace streamrank {

void check_open_unit(const Prediction& pred) {
  for (Task t : kAllTasks) {
    const double p = pred.prob[index(t)];
    if (!(p > 0.0 && p < 1.0)) {
      throw NumericError("prediction for task " + std::string(to_string(t)) + " is " +
                         std::to_string(p) + ", outside (0,1)");
    }
  }
}

namespace {

double logloss(double p, std::uint8_t y) {
  return y ? -std::log(p) : -std::log1p(-p);
}

}  // namespace

double loss_fast(const Prediction& pred, const PerTask<std::uint8_t>& labels) {
  check_open_unit(pred);
  double total = 0.0;
  for (Task t : kAllTasks) total += logloss(pred.prob[index(t)], labels[index(t)]);
  return total;
}

double loss_slow_pu(const Prediction& pred, const PerTask<bool>& missing) {
  check_open_unit(pred);
  double total = 0.0;
  bool any = false;
  for (Task t : kAllTasks) {
    if (!missing[index(t)]) continue;
    any = true;
    const double p = pred.prob[index(t)];
    total += -(std::log(p) - std::log1p(-p));
  }
  if (!any) throw std::invalid_argument("loss_slow_pu: no missing task selected");
  return total;
}

double loss_moment(const Prediction& pred, const PerTask<std::uint8_t>& labels,
                   const PerTask<bool>& learn) {
  check_open_unit(pred);
  double total = 0.0;
  for (Task t : kAllTasks) {
    if (learn[index(t)]) total += logloss(pred.prob[index(t)], labels[index(t)]);
  }
  return total;
}

PerTask<double> loss_fast_logit_grad(const Prediction& pred,
                                     const PerTask<std::uint8_t>& labels) {
  check_open_unit(pred);
  PerTask<double> g{};
  for (Task t : kAllTasks) g[index(t)] = pred.prob[index(t)] - labels[index(t)];
  return g;
}

PerTask<double> loss_slow_pu_logit_grad(const Prediction& pred, const PerTask<bool>& missing) {
  check_open_unit(pred);
  // d/dz of -(log p - log(1-p)) = d/dz of -z.
  PerTask<double> g{};
  for (Task t : kAllTasks) g[index(t)] = missing[index(t)] ? -1.0 : 0.0;
  return g;
}

PerTask<double> loss_moment_logit_grad(const Prediction& pred,
                                       const PerTask<std::uint8_t>& labels,
                                       const PerTask<bool>& learn) {
  check_open_unit(pred);
  PerTask<double> g{};
  for (Task t : kAllTasks) {
    if (learn[index(t)]) g[index(t)] = pred.prob[index(t)] - labels[index(t)];
  }
  return g;
}

double ranking_score(const Prediction& pred, const RankWeights& weights) {
  double score = 1.0;
  for (Task t : kAllTasks) {
    const double w = weights.exponent[index(t)];
    if (!std::isfinite(w)) throw std::invalid_argument("ranking_score: non-finite weight");
    score *= std::pow(1.0 + pred.prob[index(t)], w);
  }
  return score;
}

}  // namespace streamrank
