#pragma once

// Experiment driver: per-seed training with checkpoint/resume, evaluation
// rollouts, scripted baselines and plot-ready CSV export.
//
// Output layout of one training run:
//   <out>/<run-id>/manifest.json
//   <out>/<run-id>/episodes.csv, train.jsonl, eval.csv     merged over seeds
//   <out>/<run-id>/seed_<n>/episodes.csv                   one row per episode
//   <out>/<run-id>/seed_<n>/train.jsonl                    same rows + learner stats + wall clock
//   <out>/<run-id>/seed_<n>/eval.csv, eval.jsonl           final deterministic-policy rollouts
//   <out>/<run-id>/seed_<n>/checkpoints/latest.ckpt, latest.json, final.ckpt
// run-id defaults to <UTC timestamp>-<first 8 hex digits of the config hash>.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavsac/agent.hpp"
#include "uavsac/baselines.hpp"
#include "uavsac/checkpoint.hpp"
#include "uavsac/config.hpp"
#include "uavsac/environment.hpp"
#include "uavsac/errors.hpp"
#include "uavsac/rng.hpp"

namespace uavsac {

namespace fs = std::filesystem;

using Scalar = float;  // learner precision for experiments

// ---- CSV helpers -------------------------------------------------------------

namespace csv {

// Shortest representation that parses back to the same double.
inline std::string num(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw std::runtime_error("csv: number formatting failed");
  return std::string(buf, end);
}

inline std::string field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += field(cells[i]);
  }
  return out + "\r\n";
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("csv: missing column " + name);
  }
  double number(std::size_t r, const std::string& name) const { return std::stod(rows[r][column(name)]); }
};

inline Table parse(const std::string& text) {
  Table t;
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false, any = false;
  auto end_row = [&] {
    cells.push_back(cur);
    cur.clear();
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      t.rows.push_back(std::move(cells));
    }
    cells.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
      any = true;
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      end_row();
    } else {
      cur += c;
      any = true;
    }
  }
  if (any || !cur.empty()) end_row();
  return t;
}

inline Table read(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

}  // namespace csv

// ---- records -----------------------------------------------------------------

struct EpisodeRecord {
  int episode = 0;
  double reward = 0.0;
  double bits = 0.0;
  double energy_j = 0.0;
  double fairness = 0.0;  // after the last slot
  int violations = 0;
  int steps = 0;
  double wall_clock_s = 0.0;
};

inline const std::vector<std::string>& episode_columns() {
  static const std::vector<std::string> cols{"episode", "reward", "bits", "energy_j", "fairness", "violations", "steps"};
  return cols;
}

inline std::vector<std::string> episode_cells(const EpisodeRecord& r) {
  return {std::to_string(r.episode), csv::num(r.reward), csv::num(r.bits), csv::num(r.energy_j),
          csv::num(r.fairness), std::to_string(r.violations), std::to_string(r.steps)};
}

inline nlohmann::json to_json(const EpisodeRecord& r) {
  return {{"episode", r.episode},   {"reward", r.reward},         {"bits", r.bits},
          {"energy_j", r.energy_j}, {"fairness", r.fairness},     {"violations", r.violations},
          {"steps", r.steps},       {"wall_clock_s", r.wall_clock_s}};
}

inline EpisodeRecord episode_from_json(const nlohmann::json& j) {
  EpisodeRecord r;
  r.episode = j.at("episode").get<int>();
  r.reward = j.at("reward").get<double>();
  r.bits = j.at("bits").get<double>();
  r.energy_j = j.at("energy_j").get<double>();
  r.fairness = j.at("fairness").get<double>();
  r.violations = j.at("violations").get<int>();
  r.steps = j.at("steps").get<int>();
  r.wall_clock_s = j.value("wall_clock_s", 0.0);
  return r;
}

inline nlohmann::json to_json(const StepOutcome& s) {
  return {{"slot", s.slot},
          {"reward", s.reward},
          {"reward_energy", s.parts.energy},
          {"reward_data", s.parts.data},
          {"reward_fairness", s.parts.fairness},
          {"reward_penalty", s.parts.penalty},
          {"collected_bits", s.collected_bits},
          {"energy_j", s.energy_j},
          {"fairness", s.fairness},
          {"boundary_violated", s.boundary_violated},
          {"all_uploaded", s.all_uploaded},
          {"done", s.done},
          {"dx", s.executed.dx},
          {"dy", s.executed.dy},
          {"power", s.executed.power},
          {"x", s.position.x},
          {"y", s.position.y},
          {"served", s.served},
          {"observation", s.observation}};
}

// Rebuilds an episode's totals from its JSONL step trace.
inline EpisodeRecord episode_from_trace(std::istream& is, int episode = 0) {
  EpisodeRecord r;
  r.episode = episode;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    r.reward += j.at("reward").get<double>();
    r.bits += j.at("collected_bits").get<double>();
    r.energy_j += j.at("energy_j").get<double>();
    r.fairness = j.at("fairness").get<double>();
    r.violations += j.at("boundary_violated").get<bool>() ? 1 : 0;
    ++r.steps;
  }
  return r;
}

// ---- rollouts ----------------------------------------------------------------

// Runs one episode to completion. `trace`, when given, receives one JSON line
// per StepOutcome.
inline EpisodeRecord run_episode(Environment& env, const Policy& policy, std::size_t window, std::uint64_t seed,
                                 std::ostream* trace = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  EpisodeRecord rec;
  ObservationWindow hist(window, env.observation_size());
  hist.reset(env.reset(seed));
  while (!env.done()) {
    const auto out = env.step(policy(env, hist));
    hist.push(out.observation);
    rec.reward += out.reward;
    rec.bits += out.collected_bits;
    rec.energy_j += out.energy_j;
    rec.fairness = out.fairness;
    rec.violations += out.boundary_violated ? 1 : 0;
    ++rec.steps;
    if (trace) *trace << to_json(out).dump() << '\n';
  }
  rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// Deterministic (tanh of the mean) policy of a trained agent.
template <typename T>
Policy agent_policy(SacAgent<T>& agent) {
  return [&agent](const Environment& env, const ObservationWindow& hist) {
    const auto flat = hist.flat<T>();
    const auto a = agent.select_action(flat, ActionMode::eval);
    return rescale_action(env.config(), a);
  };
}

// Scenario as seen by one master seed: with a fixed layout, the sensor
// positions come from the seed's environment stream.
inline ScenarioConfig seeded_scenario(ScenarioConfig sc, std::uint64_t master) {
  sc.seed = derive_seed(master, SeedStream::environment);
  return sc;
}

inline std::uint64_t training_episode_seed(std::uint64_t master, int episode) {
  return episode_seed(derive_seed(master, SeedStream::environment), static_cast<std::uint64_t>(episode));
}

inline std::uint64_t evaluation_episode_seed(std::uint64_t master, int episode) {
  return episode_seed(derive_seed(master, SeedStream::evaluation), static_cast<std::uint64_t>(episode));
}

// Evaluates `policy` on the seed's evaluation episodes.
inline std::vector<EpisodeRecord> evaluate(const ScenarioConfig& scenario, std::uint64_t master, int episodes,
                                           const Policy& policy, std::size_t window,
                                           std::ostream* trace = nullptr) {
  Environment env(seeded_scenario(scenario, master));
  std::vector<EpisodeRecord> out;
  for (int k = 0; k < episodes; ++k) {
    auto rec = run_episode(env, policy, window, evaluation_episode_seed(master, k), trace);
    rec.episode = k;
    out.push_back(rec);
  }
  return out;
}

// ---- training ----------------------------------------------------------------

struct TrainControl {
  bool resume = false;
  int stop_after = -1;  // stop once this many episodes are done (simulated interruption)
  std::function<void(std::uint64_t seed, const EpisodeRecord&, const TrainStats&)> on_episode;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;
  std::vector<EpisodeRecord> eval;
  bool complete = false;
};

inline std::string utc_timestamp(const char* fmt = "%Y%m%dT%H%M%SZ") {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, fmt);
  return os.str();
}

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream is(path, std::ios::binary);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

inline std::string episodes_csv(const std::vector<EpisodeRecord>& recs) {
  std::string out = csv::row(episode_columns());
  for (const auto& r : recs) out += csv::row(episode_cells(r));
  return out;
}

inline nlohmann::json train_line(const EpisodeRecord& r, const TrainStats& s, std::uint64_t updates,
                                 std::uint64_t env_steps) {
  auto j = to_json(r);
  j["updates"] = updates;
  j["env_steps"] = env_steps;
  j["alpha"] = s.alpha;
  j["critic_loss"] = s.critic_loss;
  j["actor_loss"] = s.actor_loss;
  j["mean_td"] = s.mean_td;
  j["mean_log_prob"] = s.mean_log_prob;
  return j;
}

}  // namespace detail

inline fs::path seed_dir(const fs::path& run_dir, std::uint64_t seed) {
  return run_dir / ("seed_" + std::to_string(seed));
}

inline SacAgent<Scalar> make_agent(const ExperimentConfig& cfg, std::uint64_t master) {
  return SacAgent<Scalar>(cfg.agent, cfg.scenario.observation_size(), derive_seed(master, SeedStream::network_init),
                          derive_seed(master, SeedStream::action_noise), derive_seed(master, SeedStream::replay));
}

// Trains one seed into `dir`. Deterministic given (config, seed); with
// ctl.resume the last checkpoint is restored and the metric files are cut back
// to it, so the continuation matches an uninterrupted run bit for bit.
inline SeedResult train_seed(const ExperimentConfig& cfg, std::uint64_t master, const fs::path& dir,
                             const TrainControl& ctl = {}) {
  const auto ck_dir = dir / "checkpoints";
  fs::create_directories(ck_dir);
  const std::string hash = config_hash(cfg);
  const ScenarioConfig scenario = seeded_scenario(cfg.scenario, master);

  auto agent = make_agent(cfg, master);
  SeedResult res;
  res.seed = master;
  std::vector<std::string> train_lines;

  const auto latest = ck_dir / "latest.ckpt";
  if (ctl.resume && fs::exists(latest)) {
    const auto ck = Checkpoint<Scalar>::load(latest.string());
    if (ck.metadata.at("config_hash") != hash)
      throw CompatibilityError("resume: checkpoint config hash " + ck.metadata.at("config_hash") +
                               " differs from current " + hash);
    agent.load_checkpoint(ck);
    const auto done = static_cast<std::size_t>(std::stoull(ck.metadata.at("episodes_done")));
    auto lines = detail::read_lines(dir / "train.jsonl");
    if (lines.size() < done) throw StateError("resume: train.jsonl shorter than checkpoint");
    lines.resize(done);
    for (const auto& l : lines) res.episodes.push_back(episode_from_json(nlohmann::json::parse(l)));
    train_lines = std::move(lines);
  }

  std::ofstream train_log(dir / "train.jsonl", std::ios::binary | std::ios::trunc);
  for (const auto& l : train_lines) train_log << l << '\n';
  train_log.flush();
  detail::write_text(dir / "episodes.csv", detail::episodes_csv(res.episodes));
  std::ofstream episodes_log(dir / "episodes.csv", std::ios::binary | std::ios::app);

  Environment env(scenario);
  const std::size_t window = agent.window();
  ObservationWindow hist(window, env.observation_size());

  auto save_checkpoint = [&](const fs::path& path, int episodes_done, bool full) {
    auto ck = full ? agent.to_full_checkpoint() : agent.to_checkpoint();
    ck.metadata["config_hash"] = hash;
    ck.metadata["config"] = to_json(cfg).dump();
    ck.metadata["master_seed"] = std::to_string(master);
    ck.metadata["episodes_done"] = std::to_string(episodes_done);
    ck.save(path.string());
    if (full) {
      nlohmann::json m{{"checkpoint", path.filename().string()},
                       {"config_hash", hash},
                       {"master_seed", master},
                       {"episodes_done", episodes_done},
                       {"global_step", agent.env_steps()},
                       {"updates", agent.update_count()},
                       {"rng",
                        {{"action", ck.metadata.at("rng.action")},
                         {"update", ck.metadata.at("rng.update")},
                         {"replay", ck.metadata.at("rng.replay")}}}};
      detail::write_text(ck_dir / "latest.json", m.dump(2) + "\n");
    }
  };

  for (int ep = static_cast<int>(res.episodes.size()); ep < cfg.run.episodes; ++ep) {
    if (ctl.stop_after >= 0 && ep >= ctl.stop_after) return res;
    const auto t0 = std::chrono::steady_clock::now();
    EpisodeRecord rec;
    rec.episode = ep;
    TrainStats last;
    hist.reset(env.reset(training_episode_seed(master, ep)));
    while (!env.done()) {
      auto obs = hist.flat<Scalar>();
      const auto a = agent.select_action(obs, ActionMode::train);
      const auto out = env.step(rescale_action(scenario, a));
      hist.push(out.observation);
      Transition<Scalar> t;
      t.obs = std::move(obs);
      t.action.assign(a.begin(), a.end());
      t.reward = static_cast<Scalar>(out.reward);
      t.next_obs = hist.flat<Scalar>();
      t.done = out.all_uploaded;
      agent.observe(std::move(t));
      if (auto s = agent.train_step(); s.updated) last = s;
      rec.reward += out.reward;
      rec.bits += out.collected_bits;
      rec.energy_j += out.energy_j;
      rec.fairness = out.fairness;
      rec.violations += out.boundary_violated ? 1 : 0;
      ++rec.steps;
    }
    rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.episodes.push_back(rec);
    train_log << detail::train_line(rec, last, agent.update_count(), agent.env_steps()).dump() << '\n';
    train_log.flush();
    episodes_log << csv::row(episode_cells(rec));
    episodes_log.flush();
    if (ctl.on_episode) ctl.on_episode(master, rec, last);
    if ((ep + 1) % cfg.run.checkpoint_every == 0 && ep + 1 < cfg.run.episodes)
      save_checkpoint(ck_dir / "latest.ckpt", ep + 1, true);
  }
  save_checkpoint(ck_dir / "final.ckpt", cfg.run.episodes, false);

  std::ofstream eval_trace(dir / "eval.jsonl", std::ios::binary | std::ios::trunc);
  res.eval = evaluate(cfg.scenario, master, cfg.run.eval_episodes, agent_policy(agent), window, &eval_trace);
  detail::write_text(dir / "eval.csv", detail::episodes_csv(res.eval));
  res.complete = true;
  return res;
}

// ---- run level ---------------------------------------------------------------

struct RunResult {
  fs::path run_dir;
  std::vector<SeedResult> seeds;
  bool complete = false;
};

inline std::string default_run_id(const ExperimentConfig& cfg) {
  return utc_timestamp() + "-" + config_hash(cfg).substr(0, 8);
}

inline nlohmann::json make_manifest(const ExperimentConfig& cfg, const std::string& run_id) {
  return {{"run_id", run_id},
          {"label", cfg.run.label},
          {"config", to_json(cfg)},
          {"config_hash", config_hash(cfg)},
          {"scenario_hash", scenario_hash(cfg)},
          {"seeds", cfg.run.seeds},
          {"smoothing_window", cfg.run.smoothing_window},
          {"started_at", utc_timestamp("%Y-%m-%dT%H:%M:%SZ")},
          {"finished_at", nullptr},
          {"status", "running"},
          {"layout",
           {{"merged", {"episodes.csv", "train.jsonl", "eval.csv"}},
            {"per_seed", "seed_<n>/{episodes.csv,train.jsonl,eval.csv,eval.jsonl,checkpoints/}"}}}};
}

// Merges per-seed files into run-level episodes.csv, train.jsonl and eval.csv.
inline void merge_seed_files(const fs::path& run_dir, const std::vector<std::uint64_t>& seeds) {
  std::vector<std::string> cols{"seed"};
  cols.insert(cols.end(), episode_columns().begin(), episode_columns().end());
  std::string episodes = csv::row(cols), evals = csv::row(cols), train;
  for (auto s : seeds) {
    const auto dir = seed_dir(run_dir, s);
    for (auto [name, target] : {std::pair{"episodes.csv", &episodes}, std::pair{"eval.csv", &evals}}) {
      if (!fs::exists(dir / name)) continue;
      const auto t = csv::read(dir / name);
      for (const auto& r : t.rows) {
        std::vector<std::string> cells{std::to_string(s)};
        cells.insert(cells.end(), r.begin(), r.end());
        *target += csv::row(cells);
      }
    }
    for (const auto& l : detail::read_lines(dir / "train.jsonl")) {
      auto j = nlohmann::json::parse(l);
      j["seed"] = s;
      train += j.dump() + "\n";
    }
  }
  detail::write_text(run_dir / "episodes.csv", episodes);
  detail::write_text(run_dir / "eval.csv", evals);
  detail::write_text(run_dir / "train.jsonl", train);
}

// Trains every seed (in parallel up to `threads`) under <out>/<run-id>.
inline RunResult cmd_train(const ExperimentConfig& cfg, const fs::path& out, std::string run_id = {},
                           const TrainControl& ctl = {}, unsigned threads = 0) {
  cfg.validate();
  if (run_id.empty()) run_id = default_run_id(cfg);
  RunResult rr;
  rr.run_dir = out / run_id;
  std::error_code ec;
  fs::create_directories(rr.run_dir, ec);
  if (ec || !fs::is_directory(rr.run_dir))
    throw std::runtime_error("cannot create output directory " + rr.run_dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  const auto manifest_path = rr.run_dir / "manifest.json";
  if (ctl.resume && fs::exists(manifest_path)) {
    manifest = nlohmann::json::parse(detail::read_text(manifest_path));
    if (manifest.at("config_hash").get<std::string>() != config_hash(cfg))
      throw CompatibilityError("resume: run " + run_id + " was produced by a different config");
  } else {
    manifest = make_manifest(cfg, run_id);
  }
  detail::write_text(manifest_path, manifest.dump(2) + "\n");

  const auto& seeds = cfg.run.seeds;
  rr.seeds.resize(seeds.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(seeds.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(seeds.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        rr.seeds[i] = train_seed(cfg, seeds[i], seed_dir(rr.run_dir, seeds[i]), ctl);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  merge_seed_files(rr.run_dir, seeds);
  rr.complete = std::all_of(rr.seeds.begin(), rr.seeds.end(), [](const SeedResult& s) { return s.complete; });
  manifest["status"] = rr.complete ? "complete" : "interrupted";
  manifest["finished_at"] = utc_timestamp("%Y-%m-%dT%H:%M:%SZ");
  detail::write_text(manifest_path, manifest.dump(2) + "\n");
  return rr;
}

// Reloads the config stored in a run's manifest and continues training.
inline RunResult resume_train(const fs::path& run_dir, TrainControl ctl = {}, unsigned threads = 0) {
  const auto manifest = nlohmann::json::parse(detail::read_text(run_dir / "manifest.json"));
  ExperimentConfig cfg;
  apply_json(cfg, manifest.at("config"));
  ctl.resume = true;
  return cmd_train(cfg, run_dir.parent_path(), run_dir.filename().string(), ctl, threads);
}

// ---- evaluation --------------------------------------------------------------

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds (0 for one seed)
};

inline MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

struct SeedEval {
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;
  double mean(double EpisodeRecord::*field) const {
    double s = 0.0;
    for (const auto& e : episodes) s += e.*field;
    return episodes.empty() ? 0.0 : s / static_cast<double>(episodes.size());
  }
};

struct EvalTable {
  std::string method;
  std::vector<SeedEval> per_seed;
  MetricSummary reward, bits, energy_j, fairness;

  void finalize() {
    auto over = [&](double EpisodeRecord::*f) {
      std::vector<double> xs;
      for (const auto& s : per_seed) xs.push_back(s.mean(f));
      return summarize(xs);
    };
    reward = over(&EpisodeRecord::reward);
    bits = over(&EpisodeRecord::bits);
    energy_j = over(&EpisodeRecord::energy_j);
    fairness = over(&EpisodeRecord::fairness);
  }
};

// Builds a per-seed policy; the window is the observation history it expects.
struct PolicySource {
  std::string name;
  std::size_t window = 1;
  std::function<Policy(std::uint64_t seed)> make;
};

inline PolicySource baseline_source(BaselineKind kind) {
  return {to_string(kind), 1, [kind](std::uint64_t seed) {
            return baseline_policy(kind, derive_seed(seed, SeedStream::action_noise));
          }};
}

// Rolls out `episodes` deterministic evaluation episodes per seed.
inline EvalTable evaluate_policy(const ScenarioConfig& scenario, const PolicySource& src,
                                 const std::vector<std::uint64_t>& seeds, int episodes) {
  EvalTable t;
  t.method = src.name;
  for (auto s : seeds) t.per_seed.push_back({s, evaluate(scenario, s, episodes, src.make(s), src.window)});
  t.finalize();
  return t;
}

// Evaluates a saved agent. The agent layout is rebuilt from the config stored
// in the checkpoint; a scenario with a different observation layout is
// rejected.
inline EvalTable cmd_eval(const fs::path& checkpoint, const ScenarioConfig& scenario, int episodes,
                          const std::vector<std::uint64_t>& seeds, const std::string& method = "agent") {
  const auto ck = Checkpoint<Scalar>::load(checkpoint.string());
  ExperimentConfig stored;
  apply_json(stored, nlohmann::json::parse(ck.metadata.at("config")));
  if (stored.scenario.observation_size() != scenario.observation_size())
    throw CompatibilityError("eval: checkpoint expects " + std::to_string(stored.scenario.observation_size()) +
                             " observation values, scenario provides " +
                             std::to_string(scenario.observation_size()));
  const auto master = std::stoull(ck.metadata.at("master_seed"));
  auto agent = std::make_shared<SacAgent<Scalar>>(make_agent(stored, master));
  agent->load_checkpoint(ck);
  PolicySource src{method, agent->window(), [agent](std::uint64_t) { return agent_policy(*agent); }};
  return evaluate_policy(scenario, src, seeds, episodes);
}

inline std::string eval_table_csv(const std::vector<EvalTable>& tables) {
  std::string out = csv::row({"method", "n_seeds", "reward_mean", "reward_std", "bits_mean", "bits_std",
                              "energy_j_mean", "energy_j_std", "fairness_mean", "fairness_std"});
  for (const auto& t : tables) {
    out += csv::row({t.method, std::to_string(t.per_seed.size()), csv::num(t.reward.mean), csv::num(t.reward.std),
                     csv::num(t.bits.mean), csv::num(t.bits.std), csv::num(t.energy_j.mean),
                     csv::num(t.energy_j.std), csv::num(t.fairness.mean), csv::num(t.fairness.std)});
  }
  return out;
}

inline std::string eval_seed_csv(const std::vector<EvalTable>& tables) {
  std::string out = csv::row({"method", "seed", "episodes", "reward", "bits", "energy_j", "fairness"});
  for (const auto& t : tables) {
    for (const auto& s : t.per_seed) {
      out += csv::row({t.method, std::to_string(s.seed), std::to_string(s.episodes.size()),
                       csv::num(s.mean(&EpisodeRecord::reward)), csv::num(s.mean(&EpisodeRecord::bits)),
                       csv::num(s.mean(&EpisodeRecord::energy_j)), csv::num(s.mean(&EpisodeRecord::fairness))});
    }
  }
  return out;
}

// ---- plot data ---------------------------------------------------------------

// Trailing moving average; the first window-1 entries average what exists.
inline std::vector<double> trailing_mean(const std::vector<double>& xs, std::size_t window) {
  std::vector<double> out(xs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    acc += xs[i];
    if (i >= window) acc -= xs[i - window];
    const std::size_t n = std::min(i + 1, window);
    out[i] = window == 1 ? xs[i] : acc / static_cast<double>(n);
  }
  return out;
}

struct PlotData {
  std::string reward_curve;       // method,seed,episode,reward,reward_ma<w>
  std::string reward_curve_mean;  // method,episode,n_seeds,reward_mean,reward_ma<w>_mean
  std::string summary;            // bar table of evaluation means per method
};

// Builds the CSV bundle for a set of runs sharing one scenario. A window of 0
// takes each run's recorded smoothing window (they must agree).
inline PlotData cmd_plotdata(const std::vector<fs::path>& run_dirs, int window = 0) {
  if (run_dirs.empty()) throw ConfigError("plotdata", "no run directories given");
  std::vector<nlohmann::json> manifests;
  for (const auto& d : run_dirs) manifests.push_back(nlohmann::json::parse(detail::read_text(d / "manifest.json")));
  const std::string ref = manifests[0].at("scenario_hash").get<std::string>();
  std::string diff;
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    const auto h = manifests[i].at("scenario_hash").get<std::string>();
    if (h != ref) diff += "\n  " + run_dirs[i].string() + ": " + h + " (expected " + ref + ")";
  }
  if (!diff.empty()) throw CompatibilityError("plotdata: runs use different scenarios:" + diff);
  if (window <= 0) {
    window = manifests[0].at("smoothing_window").get<int>();
    for (const auto& m : manifests)
      if (m.at("smoothing_window").get<int>() != window)
        throw ConfigError("run.smoothing_window", "runs disagree; pass an explicit window");
  }
  const auto w = static_cast<std::size_t>(window);
  const std::string ma = "reward_ma" + std::to_string(window);

  PlotData pd;
  pd.reward_curve = csv::row({"method", "seed", "episode", "reward", ma});
  pd.reward_curve_mean = csv::row({"method", "episode", "n_seeds", "reward_mean", ma + "_mean"});
  std::vector<EvalTable> tables;
  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < run_dirs.size(); ++i) {
    std::string method = manifests[i].at("label").get<std::string>();
    if (seen[method]++) method += "@" + manifests[i].at("run_id").get<std::string>();
    std::vector<std::vector<double>> raw, smooth;
    EvalTable table;
    table.method = method;
    for (auto s : manifests[i].at("seeds").get<std::vector<std::uint64_t>>()) {
      const auto dir = seed_dir(run_dirs[i], s);
      const auto t = csv::read(dir / "episodes.csv");
      std::vector<double> rewards;
      for (std::size_t r = 0; r < t.rows.size(); ++r) rewards.push_back(t.number(r, "reward"));
      const auto sm = trailing_mean(rewards, w);
      for (std::size_t r = 0; r < t.rows.size(); ++r)
        pd.reward_curve += csv::row({method, std::to_string(s), t.rows[r][t.column("episode")],
                                     csv::num(rewards[r]), csv::num(sm[r])});
      raw.push_back(rewards);
      smooth.push_back(sm);
      if (fs::exists(dir / "eval.csv")) {
        const auto e = csv::read(dir / "eval.csv");
        SeedEval se{s, {}};
        for (std::size_t r = 0; r < e.rows.size(); ++r) {
          EpisodeRecord rec;
          rec.episode = static_cast<int>(e.number(r, "episode"));
          rec.reward = e.number(r, "reward");
          rec.bits = e.number(r, "bits");
          rec.energy_j = e.number(r, "energy_j");
          rec.fairness = e.number(r, "fairness");
          se.episodes.push_back(rec);
        }
        table.per_seed.push_back(se);
      }
    }
    std::size_t len = 0;
    for (const auto& r : raw) len = std::max(len, r.size());
    for (std::size_t e = 0; e < len; ++e) {
      double a = 0.0, b = 0.0;
      int n = 0;
      for (std::size_t k = 0; k < raw.size(); ++k) {
        if (e >= raw[k].size()) continue;
        a += raw[k][e];
        b += smooth[k][e];
        ++n;
      }
      pd.reward_curve_mean += csv::row({method, std::to_string(e), std::to_string(n), csv::num(a / n),
                                        csv::num(b / n)});
    }
    table.finalize();
    tables.push_back(table);
  }
  pd.summary = eval_table_csv(tables);
  return pd;
}

inline void write_plotdata(const PlotData& pd, const fs::path& out) {
  fs::create_directories(out);
  detail::write_text(out / "reward_curve.csv", pd.reward_curve);
  detail::write_text(out / "reward_curve_mean.csv", pd.reward_curve_mean);
  detail::write_text(out / "summary.csv", pd.summary);
}

}  // namespace uavsac
