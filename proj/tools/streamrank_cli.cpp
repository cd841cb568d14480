// streamrank command-line driver: simulate -> assemble -> train -> eval -> report,
// plus the end-to-end policy comparison.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "streamrank/crossseq.hpp"
#include "streamrank/labels.hpp"
#include "streamrank/metrics.hpp"
#include "streamrank/model.hpp"
#include "streamrank/pipeline.hpp"
#include "streamrank/sim.hpp"
#include "streamrank/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace streamrank;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> users;
  std::optional<std::size_t> rooms;
  std::optional<double> horizon;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "run config (JSON)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "override the run seed");
  app->add_option("-o,--out-dir", c.out, "override the output root");
  app->add_option("--users", c.users, "override sim.num_users");
  app->add_option("--rooms", c.rooms, "override sim.num_rooms");
  app->add_option("--horizon", c.horizon, "override sim.horizon (seconds)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.apply_seed(*c.seed);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.users) cfg.sim.num_users = *c.users;
  if (c.rooms) cfg.sim.num_rooms = *c.rooms;
  if (c.horizon) cfg.sim.horizon = *c.horizon;
  cfg.validate();
  return cfg;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

json read_json(const fs::path& p) {
  auto in = open_in(p);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

struct Catalog {
  std::vector<RoomState> rooms;
  std::vector<ShortVideo> videos;
};

Catalog read_catalog(const fs::path& p) {
  Catalog c;
  catalog_from_json(read_json(p), c.rooms, c.videos);
  return c;
}

int cmd_simulate(const Common& common) {
  const RunConfig cfg = resolve(common);
  const fs::path dir = run_directory(cfg);
  const SimResult sim = simulate(cfg.sim);
  {
    auto os = open_out(dir / "events.jsonl");
    write_events_jsonl(os, sim.events);
  }
  {
    auto os = open_out(dir / "truth.csv");
    write_truth_csv(os, sim.truth);
  }
  {
    auto os = open_out(dir / "catalog.json");
    os << catalog_to_json(sim.rooms, sim.videos).dump(2) << '\n';
  }
  write_manifest(dir, cfg, {}, {dir / "events.jsonl", dir / "truth.csv", dir / "catalog.json"});
  std::cout << dir.string() << '\n';
  std::cerr << "simulated " << sim.events.size() << " events, " << sim.rooms.size() << " rooms\n";
  return 0;
}

struct AssembleArgs {
  std::string events;
  std::string policy = "realtime";
  std::optional<double> fast, slow, tick;
  std::string out;
};

int cmd_assemble(const Common& common, const AssembleArgs& a) {
  const RunConfig cfg = resolve(common);
  ReportPolicy p = cfg.policy;
  p.kind = parse_report_kind(a.policy);
  if (a.fast) p.fast_window = *a.fast;
  if (a.slow) p.slow_window = *a.slow;
  if (a.tick) p.tick = *a.tick;
  p.validate();
  auto in = open_in(a.events);
  const auto events = read_events_jsonl(in);
  const auto samples = assemble(events, p);
  const fs::path out = a.out.empty()
                           ? run_directory(cfg) / ("samples_" + std::string(to_string(p.kind)) + ".jsonl")
                           : fs::path(a.out);
  auto os = open_out(out);
  write_samples_jsonl(os, samples);
  std::cout << out.string() << '\n';
  std::cerr << "assembled " << samples.size() << " samples under the " << to_string(p.kind)
            << " policy\n";
  return 0;
}

struct TrainArgs {
  std::string samples;
  std::string catalog;
  std::string events;
  std::string mode;
  std::string checkpoint;
  std::string trace;
};

int cmd_train(const Common& common, const TrainArgs& a) {
  const RunConfig cfg = resolve(common);
  const Catalog cat = read_catalog(a.catalog);
  auto in = open_in(a.samples);
  const auto samples = read_samples_jsonl(in);
  std::optional<HistoryStore> history;
  if (cfg.trainer.hyper.use_cross) {
    if (a.events.empty()) throw std::runtime_error("cross features need --events for the history store");
    auto ev = open_in(a.events);
    const auto events = read_events_jsonl(ev);
    history = HistoryStore::from_events(events, cat.rooms, cat.videos);
  }
  const FeatureSource features(cat.rooms, history ? &*history : nullptr);
  const Vocabulary vocab = make_vocabulary(cfg.sim.num_users, cat.rooms, cat.videos);
  ObjectiveMode mode = a.mode.empty() ? (cfg.trainer.mode ? *cfg.trainer.mode : ObjectiveMode::kMoment)
                                      : parse_objective_mode(a.mode);
  const TrainerConfig tc{mode, cfg.trainer.bucket_seconds};
  const TrainResult res =
      train_stream(ModelParams::init(cfg.trainer.hyper, vocab, cfg.model_seed()), samples, features, tc);

  const fs::path dir = (a.checkpoint.empty() || a.trace.empty()) ? run_directory(cfg) : fs::path();
  const fs::path ckpt = a.checkpoint.empty() ? dir / "model.ckpt" : fs::path(a.checkpoint);
  const fs::path trace = a.trace.empty() ? dir / "loss_trace.csv" : fs::path(a.trace);
  {
    auto os = open_out(ckpt);
    save_checkpoint(os, res.params);
  }
  {
    auto os = open_out(trace);
    write_loss_trace_csv(os, res.trace);
  }
  std::cout << ckpt.string() << '\n';
  std::cerr << "trained " << res.trace.size() << " steps in " << to_string(mode) << " mode\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string events;
  std::string catalog;
  std::string out;
};

int cmd_eval(const Common& common, const EvalArgs& a) {
  const RunConfig cfg = resolve(common);
  auto ck = open_in(a.checkpoint);
  const ModelParams params = load_checkpoint(ck);
  const Catalog cat = read_catalog(a.catalog);
  auto ev = open_in(a.events);
  const auto events = read_events_jsonl(ev);
  const auto sessions = group_sessions(events);
  std::optional<HistoryStore> history;
  if (params.hyper.use_cross) history = HistoryStore::from_events(events, cat.rooms, cat.videos);
  const FeatureSource features(cat.rooms, history ? &*history : nullptr);
  const auto metrics = task_metrics(evaluate_sessions(params, features, sessions));
  const ReportPolicy fs_policy = ReportPolicy::fast_slow(cfg.policy.fast_window, cfg.policy.slow_window);
  const auto cons = consistency_table(sessions, fs_policy.fast_window, fs_policy.slow_window);

  json m = json::array();
  for (const auto& t : metrics) m.push_back(to_json(t));
  json c = json::array();
  for (const auto& r : cons) c.push_back(to_json(r));
  const json out = {{"metrics", m}, {"consistency", c}};
  const fs::path path = a.out.empty() ? run_directory(cfg) / "eval.json" : fs::path(a.out);
  auto os = open_out(path);
  os << out.dump(2) << '\n';
  std::ostringstream csv;
  write_task_metrics_csv(csv, metrics);
  std::cout << csv.str();
  return 0;
}

int cmd_compare(const Common& common) {
  const RunConfig cfg = resolve(common);
  const fs::path dir = run_directory(cfg);
  const ComparisonReport rep = compare_policies(cfg);
  const auto written = write_comparison(rep, dir);
  write_manifest(dir, cfg, {}, written);
  std::cout << format_report(to_json(rep)) << "\nwritten to " << dir.string() << '\n';
  return 0;
}

int cmd_report(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "report.json";
  std::cout << format_report(read_json(p));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming label assembly and real-time CTR training experiments"};
  app.require_subcommand(1);

  Common common;
  auto* sim = app.add_subcommand("simulate", "generate an event log and ground-truth series");
  add_common(sim, common);

  AssembleArgs aa;
  auto* assemble_cmd = app.add_subcommand("assemble", "turn an event log into training samples");
  add_common(assemble_cmd, common);
  assemble_cmd->add_option("-e,--events", aa.events, "event log (JSONL)")->required()->check(CLI::ExistingFile);
  assemble_cmd->add_option("-p,--policy", aa.policy, "exit | fast_slow | realtime");
  assemble_cmd->add_option("--fast-window", aa.fast);
  assemble_cmd->add_option("--slow-window", aa.slow);
  assemble_cmd->add_option("--tick", aa.tick);
  assemble_cmd->add_option("--samples-out", aa.out, "output file");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "stream samples through the model");
  add_common(train, common);
  train->add_option("-s,--samples", ta.samples, "samples (JSONL)")->required()->check(CLI::ExistingFile);
  train->add_option("--catalog", ta.catalog, "catalog.json from simulate")->required()->check(CLI::ExistingFile);
  train->add_option("-e,--events", ta.events, "event log, needed for cross features");
  train->add_option("-m,--mode", ta.mode, "fast_slow | moment");
  train->add_option("--checkpoint", ta.checkpoint, "checkpoint output");
  train->add_option("--trace", ta.trace, "loss trace CSV output");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "score sessions with a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("-e,--events", ea.events)->required()->check(CLI::ExistingFile);
  eval->add_option("--catalog", ea.catalog)->required()->check(CLI::ExistingFile);
  eval->add_option("--eval-out", ea.out, "metrics JSON output");

  auto* compare = app.add_subcommand("compare-policies", "run every policy on one event log");
  add_common(compare, common);

  std::string report_path;
  auto* report = app.add_subcommand("report", "print a comparison report");
  report->add_option("path", report_path, "run directory or report.json")->required()->check(CLI::ExistingPath);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim->parsed()) return cmd_simulate(common);
    if (assemble_cmd->parsed()) return cmd_assemble(common, aa);
    if (train->parsed()) return cmd_train(common, ta);
    if (eval->parsed()) return cmd_eval(common, ea);
    if (compare->parsed()) return cmd_compare(common);
    if (report->parsed()) return cmd_report(report_path);
  } catch (const std::exception& e) {
    std::cerr << "streamrank: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
