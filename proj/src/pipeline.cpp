#include "streamrank/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "streamrank/rng.hpp"

namespace streamrank {

using nlohmann::json;
namespace fs = std::filesystem;

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  sim.seed = s;
}

std::uint64_t RunConfig::model_seed() const { return derive_seed(seed, {0x5eed}); }

void RunConfig::validate() const {
  sim.validate();
  policy.validate();
  for (const auto& p : compare) p.validate();
  if (compare.empty()) throw ConfigError("compare must list at least one policy");
  if (!(metrics.snapshot_interval > 0.0)) throw ConfigError("snapshot_interval must be positive");
  if (!(trainer.bucket_seconds >= 0.0)) throw ConfigError("bucket_seconds must be non-negative");
  if (!(trainer.hyper.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (trainer.hyper.embedding_dim == 0 || trainer.hyper.hidden == 0) {
    throw ConfigError("embedding_dim and hidden must be positive");
  }
  if (trainer.hyper.use_cross && trainer.hyper.attention_dim % std::max<std::size_t>(trainer.hyper.heads, 1) != 0) {
    throw ConfigError("attention_dim must be divisible by heads");
  }
}

json to_json(const RunConfig& c) {
  json compare = json::array();
  for (const auto& p : c.compare) compare.push_back(to_json(p));
  json trainer = {{"bucket_seconds", c.trainer.bucket_seconds}, {"hyper", to_json(c.trainer.hyper)}};
  trainer["mode"] = c.trainer.mode ? json(to_string(*c.trainer.mode)) : json(nullptr);
  return {{"seed", c.seed},
          {"sim", to_json(c.sim)},
          {"policy", to_json(c.policy)},
          {"compare", compare},
          {"trainer", trainer},
          {"metrics",
           {{"k", c.metrics.lag.k},
            {"baseline_window", c.metrics.lag.baseline_window},
            {"std_floor", c.metrics.lag.std_floor},
            {"snapshot_interval", c.metrics.snapshot_interval},
            {"probe_users", c.metrics.probe_users}}},
          {"out_dir", c.out_dir}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    if (j.contains("sim")) c.sim = sim_config_from_json(j.at("sim"));
    if (j.contains("policy")) c.policy = report_policy_from_json(j.at("policy"));
    if (j.contains("compare")) {
      c.compare.clear();
      for (const auto& p : j.at("compare")) c.compare.push_back(report_policy_from_json(p));
    }
    if (j.contains("trainer")) {
      const auto& t = j.at("trainer");
      if (t.contains("mode") && !t.at("mode").is_null()) {
        c.trainer.mode = parse_objective_mode(t.at("mode").get<std::string>());
      }
      c.trainer.bucket_seconds = t.value("bucket_seconds", c.trainer.bucket_seconds);
      if (t.contains("hyper")) c.trainer.hyper = model_hyper_from_json(t.at("hyper"));
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      c.metrics.lag.k = m.value("k", c.metrics.lag.k);
      c.metrics.lag.baseline_window = m.value("baseline_window", c.metrics.lag.baseline_window);
      c.metrics.lag.std_floor = m.value("std_floor", c.metrics.lag.std_floor);
      c.metrics.snapshot_interval = m.value("snapshot_interval", c.metrics.snapshot_interval);
      c.metrics.probe_users = m.value("probe_users", c.metrics.probe_users);
    }
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("seed")) {
      c.apply_seed(j.at("seed").get<std::uint64_t>());
    } else {
      c.seed = c.sim.seed;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return hex64(h);
}

std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("out_dir");
  return hex64(fnv1a(j.dump()));
}

fs::path run_directory(const RunConfig& c) {
  fs::path dir = fs::path(c.out_dir) / config_hash(c);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create run directory " + dir.string() + ": " + ec.message());
  }
  return dir;
}

void write_manifest(const fs::path& dir, const RunConfig& c, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
  json in = json::object();
  for (const auto& p : inputs) in[p.string()] = file_hash(p);
  json out = json::object();
  for (const auto& p : outputs) out[p.filename().string()] = file_hash(p);
  const json m = {{"config_hash", config_hash(c)}, {"config", to_json(c)}, {"inputs", in},
                  {"outputs", out}};
  std::ofstream os(dir / "manifest.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  os << m.dump(2) << '\n';
}

ObjectiveMode resolve_mode(const RunConfig& c, const ReportPolicy& p) {
  return c.trainer.mode ? *c.trainer.mode : objective_for(p.kind);
}

PerTask<std::uint8_t> session_labels(const SessionRecord& s) {
  const auto first = first_only_filter(s.events);
  PerTask<std::uint8_t> y{};
  for (Task t : kAllTasks) y[index(t)] = first[index(t)].has_value();
  return y;
}

std::vector<EvalRecord> evaluate_sessions(const ModelParams& params, const FeatureSource& features,
                                          std::span<const SessionRecord> sessions) {
  std::vector<EvalRecord> out;
  for (const auto& s : sessions) {
    if (s.domain != Domain::kLive) continue;
    out.push_back({s.user_id, s.room_id, s.session_id,
                   predict(params, features.features(s.user_id, s.room_id, s.enter)),
                   session_labels(s)});
  }
  return out;
}

Experiment Experiment::prepare(const RunConfig& c) {
  c.validate();
  Experiment ex;
  ex.sim = simulate(c.sim);
  ex.sessions = group_sessions(ex.sim.events);
  if (c.trainer.hyper.use_cross) {
    ex.history = HistoryStore::from_events(ex.sim.events, ex.sim.rooms, ex.sim.videos);
  }
  return ex;
}

namespace {

std::int64_t grid_key(Seconds t, Seconds interval) {
  return static_cast<std::int64_t>(std::llround(t / interval));
}

}  // namespace

PolicyRun run_policy(const Experiment& ex, const RunConfig& c, const ReportPolicy& policy) {
  PolicyRun run;
  run.policy = policy;
  run.mode = resolve_mode(c, policy);
  const auto samples = assemble_sessions(ex.sessions, policy);
  run.samples = samples.size();

  const HistoryStore* history = ex.history ? &*ex.history : nullptr;
  const FeatureSource features(ex.sim.rooms, history);
  const Vocabulary vocab = make_vocabulary(c.sim.num_users, ex.sim.rooms, ex.sim.videos);
  ModelParams init = ModelParams::init(c.trainer.hyper, vocab, c.model_seed());
  const auto probes = probe_users(c.sim.num_users, c.metrics.probe_users);

  // Live sessions in enter order, for progressive evaluation.
  std::vector<const SessionRecord*> live;
  for (const auto& s : ex.sessions) {
    if (s.domain == Domain::kLive) live.push_back(&s);
  }
  std::stable_sort(live.begin(), live.end(), [](const SessionRecord* a, const SessionRecord* b) {
    return a->enter < b->enter;
  });

  const Seconds dt = c.metrics.snapshot_interval;
  std::map<std::int64_t, std::vector<ItemId>> rooms_at;
  for (const auto& p : ex.sim.truth) {
    if (std::abs(p.t - static_cast<double>(grid_key(p.t, dt)) * dt) < 1e-6) {
      rooms_at[grid_key(p.t, dt)].push_back(p.room_id);
    }
  }

  std::vector<EvalRecord> records;
  std::size_t next_live = 0;
  TrainHooks hooks;
  hooks.snapshot_interval = dt;
  hooks.first_snapshot = 0.0;
  hooks.last_snapshot = c.sim.horizon;
  for (const auto& r : ex.sim.rooms) hooks.last_snapshot = std::max(hooks.last_snapshot, r.end_time);
  hooks.on_snapshot = [&](Seconds t, const ModelParams& params) {
    while (next_live < live.size() && live[next_live]->enter < t + dt) {
      const SessionRecord& s = *live[next_live++];
      records.push_back({s.user_id, s.room_id, s.session_id,
                         predict(params, features.features(s.user_id, s.room_id, s.enter)),
                         session_labels(s)});
    }
    auto it = rooms_at.find(grid_key(t, dt));
    if (it == rooms_at.end()) return;
    for (ItemId room : it->second) {
      run.series[room].push_back({t, mean_click_probability(params, features, room, probes, t)});
    }
  };

  TrainerConfig tc{run.mode, c.trainer.bucket_seconds};
  TrainResult tr = train_stream(std::move(init), samples, features, tc, &hooks);
  run.steps = tr.trace.size();
  double sum = 0.0;
  for (const auto& r : tr.trace) sum += r.loss;
  run.mean_loss = run.steps > 0 ? sum / static_cast<double>(run.steps) : 0.0;
  run.trace = std::move(tr.trace);
  run.metrics = task_metrics(records);

  // Detection lag pooled over every highlight onset of every room.
  std::vector<OnsetLag> all;
  double total = 0.0;
  for (const auto& room : ex.sim.rooms) {
    auto it = run.series.find(room.room_id);
    if (it == run.series.end() || it->second.empty() || room.highlight_schedule.empty()) continue;
    std::vector<Seconds> onsets;
    for (const auto& h : room.highlight_schedule) onsets.push_back(h.start);
    const LagResult lr = detection_lag(it->second, {}, onsets, c.metrics.lag);
    for (const auto& o : lr.onsets) {
      all.push_back(o);
      total += o.lag;
    }
  }
  run.lag.onsets = std::move(all);
  run.lag.mean_lag = run.lag.onsets.empty() ? 0.0 : total / static_cast<double>(run.lag.onsets.size());
  return run;
}

ComparisonReport compare_policies(const RunConfig& c) {
  const Experiment ex = Experiment::prepare(c);
  ComparisonReport rep;
  rep.config_hash = config_hash(c);
  rep.events = ex.sim.events.size();
  for (const auto& s : ex.sessions) rep.live_sessions += s.domain == Domain::kLive;
  const ReportPolicy fs = [&] {
    for (const auto& p : c.compare) {
      if (p.kind == ReportKind::kFastSlow) return p;
    }
    return ReportPolicy::fast_slow();
  }();
  rep.consistency = consistency_table(ex.sessions, fs.fast_window, fs.slow_window);
  for (const auto& p : ex.sim.truth) rep.truth[p.room_id].push_back({p.t, p.attractiveness});

  for (const auto& p : c.compare) {
    rep.runs.push_back(run_policy(ex, c, p));
  }
  const std::size_t base = rep.runs.front().samples;
  for (auto& r : rep.runs) {
    if (base > 0) r.sample_volume_ratio = static_cast<double>(r.samples) / static_cast<double>(base);
  }
  return rep;
}

json to_json(const ComparisonReport& r) {
  json runs = json::array();
  for (const auto& run : r.runs) {
    json metrics = json::array();
    for (const auto& m : run.metrics) metrics.push_back(to_json(m));
    std::size_t detected = 0;
    for (const auto& o : run.lag.onsets) detected += o.detected;
    runs.push_back({{"policy", to_json(run.policy)},
                    {"objective", to_string(run.mode)},
                    {"samples", run.samples},
                    {"sample_volume_ratio", opt_json(run.sample_volume_ratio)},
                    {"steps", run.steps},
                    {"mean_loss", run.mean_loss},
                    {"detection_lag", run.lag.mean_lag},
                    {"onsets", run.lag.onsets.size()},
                    {"onsets_detected", detected},
                    {"metrics", metrics}});
  }
  json cons = json::array();
  for (const auto& row : r.consistency) cons.push_back(to_json(row));
  return {{"config_hash", r.config_hash}, {"events", r.events},   {"live_sessions", r.live_sessions},
          {"consistency", cons},          {"policies", runs}};
}

namespace {

std::string policy_tag(const ReportPolicy& p, std::size_t i) {
  return std::to_string(i) + "_" + std::string(to_string(p.kind));
}

void write_file(const fs::path& path, const std::string& text, std::vector<fs::path>& written) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
  written.push_back(path);
}

}  // namespace

std::vector<fs::path> write_comparison(const ComparisonReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  write_file(dir / "report.json", to_json(r).dump(2) + "\n", written);
  {
    std::ostringstream os;
    write_consistency_csv(os, r.consistency);
    write_file(dir / "consistency.csv", os.str(), written);
  }
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    const auto& run = r.runs[i];
    const std::string tag = policy_tag(run.policy, i);
    std::ostringstream m;
    write_task_metrics_csv(m, run.metrics);
    write_file(dir / ("metrics_" + tag + ".csv"), m.str(), written);

    std::ostringstream l;
    write_loss_trace_csv(l, run.trace);
    write_file(dir / ("loss_" + tag + ".csv"), l.str(), written);

    std::ostringstream s;
    s << "room_id,t,predicted_ctr,attractiveness\n";
    for (const auto& [room, series] : run.series) {
      std::map<std::int64_t, double> truth;
      if (auto it = r.truth.find(room); it != r.truth.end()) {
        for (const auto& p : it->second) truth[std::llround(p.t * 1000.0)] = p.value;
      }
      char buf[96];
      for (const auto& p : series) {
        auto t = truth.find(std::llround(p.t * 1000.0));
        if (t != truth.end()) {
          std::snprintf(buf, sizeof buf, "%.3f,%.10g,%.10g", p.t, p.value, t->second);
        } else {
          std::snprintf(buf, sizeof buf, "%.3f,%.10g,", p.t, p.value);
        }
        s << room << ',' << buf << '\n';
      }
    }
    write_file(dir / ("series_" + tag + ".csv"), s.str(), written);
  }
  return written;
}

std::string format_report(const json& rep) {
  std::ostringstream os;
  char buf[256];
  os << "config " << rep.value("config_hash", std::string("?")) << ": "
     << rep.value("events", 0) << " events, " << rep.value("live_sessions", 0)
     << " live sessions\n\n";
  os << "label consistency (fast window vs slow window)\n";
  for (const auto& row : rep.at("consistency")) {
    const auto& v = row.at("consistency");
    if (v.is_null()) {
      std::snprintf(buf, sizeof buf, "  %-15s %8s  (%zu / %zu)\n",
                    row.at("task").get<std::string>().c_str(), "n/a",
                    row.at("fast_positive_count").get<std::size_t>(),
                    row.at("slow_window_positive_count").get<std::size_t>());
    } else {
      std::snprintf(buf, sizeof buf, "  %-15s %7.1f%%  (%zu / %zu)\n",
                    row.at("task").get<std::string>().c_str(), 100.0 * v.get<double>(),
                    row.at("fast_positive_count").get<std::size_t>(),
                    row.at("slow_window_positive_count").get<std::size_t>());
    }
    os << buf;
  }
  os << "\npolicy       objective  samples   ratio   lag(s)  detected  click_auc  click_gauc\n";
  for (const auto& p : rep.at("policies")) {
    const auto num = [](const json& v) { return v.is_null() ? std::string("n/a") : [&] {
      char b[32];
      std::snprintf(b, sizeof b, "%.4f", v.get<double>());
      return std::string(b);
    }(); };
    json click = nullptr;
    for (const auto& m : p.at("metrics")) {
      if (m.at("task") == "click") click = m;
    }
    std::snprintf(buf, sizeof buf, "%-12s %-10s %8zu %7s %8.1f %5zu/%-4zu %9s %11s\n",
                  p.at("policy").at("kind").get<std::string>().c_str(),
                  p.at("objective").get<std::string>().c_str(), p.at("samples").get<std::size_t>(),
                  num(p.at("sample_volume_ratio")).c_str(), p.at("detection_lag").get<double>(),
                  p.at("onsets_detected").get<std::size_t>(), p.at("onsets").get<std::size_t>(),
                  click.is_null() ? "n/a" : num(click.at("auc")).c_str(),
                  click.is_null() ? "n/a" : num(click.at("gauc")).c_str());
    os << buf;
  }
  return os.str();
}

}  // namespace streamrank
