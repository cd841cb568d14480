#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "streamrank/losses.hpp"
#include "streamrank/pipeline.hpp"

namespace py = pybind11;
using namespace streamrank;

namespace {

Prediction pred_of(const PerTask<double>& p) {
  Prediction r;
  r.prob = p;
  return r;
}

std::vector<InteractionEvent> events_of(const std::string& jsonl) {
  std::istringstream is(jsonl);
  return read_events_jsonl(is);
}

std::vector<ScoredExample> examples_of(const std::vector<UserId>& users, const std::vector<double>& scores,
                                       const std::vector<int>& labels) {
  if (scores.size() != labels.size() || (!users.empty() && users.size() != scores.size())) {
    throw std::invalid_argument("users, scores and labels must have equal lengths");
  }
  std::vector<ScoredExample> ex(scores.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    ex[i].user_id = users.empty() ? 0 : users[i];
    ex[i].score = scores[i];
    ex[i].label = labels[i] != 0;
  }
  return ex;
}

}  // namespace

PYBIND11_MODULE(_streamrank, m) {
  m.doc() = "Native core of streamrank. Structured values cross as JSON text.";

  py::register_exception<MalformedLogError>(m, "MalformedLogError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<RoutingError>(m, "RoutingError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::list tasks;
  for (Task t : kAllTasks) tasks.append(std::string(to_string(t)));
  m.attr("TASKS") = tasks;

  m.def("loss_fast", [](const PerTask<double>& p, const PerTask<std::uint8_t>& y) {
    return loss_fast(pred_of(p), y);
  });
  m.def("loss_slow_pu", [](const PerTask<double>& p, const PerTask<bool>& missing) {
    return loss_slow_pu(pred_of(p), missing);
  });
  m.def("loss_moment", [](const PerTask<double>& p, const PerTask<std::uint8_t>& y, const PerTask<bool>& learn) {
    return loss_moment(pred_of(p), y, learn);
  });
  m.def(
      "ranking_score",
      [](const PerTask<double>& p, std::optional<PerTask<double>> w) {
        RankWeights rw;
        if (w) rw.exponent = *w;
        return ranking_score(pred_of(p), rw);
      },
      py::arg("probs"), py::arg("exponents") = std::nullopt);

  m.def("auc", [](const std::vector<double>& scores, const std::vector<int>& labels) {
    return auc(examples_of({}, scores, labels));
  });
  m.def("gauc", [](const std::vector<UserId>& users, const std::vector<double>& scores,
                   const std::vector<int>& labels) { return gauc(examples_of(users, scores, labels)); });
  m.def(
      "detection_lag",
      [](const std::vector<double>& t, const std::vector<double>& v, const std::vector<double>& onsets, double k,
         double baseline_window) {
        if (t.size() != v.size()) throw std::invalid_argument("times and values differ in length");
        std::vector<SeriesPoint> s(t.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = {t[i], v[i]};
        LagConfig cfg;
        cfg.k = k;
        cfg.baseline_window = baseline_window;
        return to_json(detection_lag(s, {}, onsets, cfg)).dump();
      },
      py::arg("times"), py::arg("values"), py::arg("onsets"), py::arg("k") = 2.0,
      py::arg("baseline_window") = 300.0);

  m.def("default_sim_config", [] { return to_json(SimConfig::defaults()).dump(); });
  m.def("default_run_config", [] { return to_json(RunConfig{}).dump(); });
  m.def("simulate", [](const std::string& cfg) {
    const SimResult r = simulate(sim_config_from_json(nlohmann::json::parse(cfg)));
    std::ostringstream os;
    write_events_jsonl(os, r.events);
    return py::make_tuple(os.str(), catalog_to_json(r.rooms, r.videos).dump());
  });
  m.def("assemble", [](const std::string& events, const std::string& policy) {
    const auto samples = assemble(events_of(events), report_policy_from_json(nlohmann::json::parse(policy)));
    std::ostringstream os;
    write_samples_jsonl(os, samples);
    return os.str();
  });
  m.def("consistency_table", [](const std::string& events, double fast_window, double slow_window) {
    const auto sessions = group_sessions(events_of(events));
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : consistency_table(sessions, fast_window, slow_window)) out.push_back(to_json(r));
    return out.dump();
  });
  m.def(
      "compare_policies",
      [](const std::string& cfg, const std::string& out_dir) {
        const RunConfig c = run_config_from_json(nlohmann::json::parse(cfg));
        ComparisonReport r;
        {
          py::gil_scoped_release release;
          r = compare_policies(c);
        }
        if (!out_dir.empty()) write_comparison(r, out_dir);
        return to_json(r).dump();
      },
      py::arg("config"), py::arg("out_dir") = "");
}
