// uavsac: train, evaluate and export plot data for the UAV data-collection learner.
//
//   uavsac train --config cfg.json --seeds 1,2,3 --out runs [--episodes N] [--ablation both]
//   uavsac train --resume runs/<run-id>
//   uavsac eval --checkpoint runs/<id>/seed_1/checkpoints/final.ckpt --config cfg.json --seeds 1 --episodes 50
//   uavsac eval --policy random --config cfg.json --seeds 1,2 --episodes 50 [--trace t.jsonl]
//   uavsac plotdata runs/<id-a> runs/<id-b> --out plots [--window 20]
//   uavsac validate-config --config cfg.json
//
// Settings resolve in order: defaults, config file, UAVSAC_* environment
// variables, command-line flags.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uavsac/uavsac.hpp"

namespace {

using namespace uavsac;

void apply_ablation(ExperimentConfig& cfg, const std::string& ablation) {
  const bool label_is_default = cfg.run.label == RunOptions{}.label;
  if (ablation == "both") {
    cfg.agent.use_per = cfg.agent.use_performer = true;
  } else if (ablation == "per") {
    cfg.agent.use_per = true;
    cfg.agent.use_performer = false;
  } else if (ablation == "performer") {
    cfg.agent.use_per = false;
    cfg.agent.use_performer = true;
  } else if (ablation == "none") {
    cfg.agent.use_per = cfg.agent.use_performer = false;
  }
  if (label_is_default) {
    if (ablation == "per") cfg.run.label = "sac-per";
    if (ablation == "performer") cfg.run.label = "sac-performer";
    if (ablation == "none") cfg.run.label = "sac";
  }
}

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  int episodes = 0;
  std::string ablation;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (!c.seeds.empty()) cfg.run.seeds = c.seeds;
  if (c.episodes > 0) cfg.run.episodes = c.episodes;
  if (!c.ablation.empty()) apply_ablation(cfg, c.ablation);
  cfg.validate();
  return cfg;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV wireless-powered data collection: soft actor-critic training and evaluation"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* sub, Common& c, bool with_ablation) {
    sub->add_option("--config", c.config, "JSON config file (defaults when omitted)");
    sub->add_option("--seeds", c.seeds, "Master seeds, comma separated")->delimiter(',');
    sub->add_option("--episodes", c.episodes, "Episode count (training episodes or evaluation episodes per seed)");
    if (with_ablation)
      sub->add_option("--ablation", c.ablation, "Enabled components")
          ->check(CLI::IsMember({"per", "performer", "both", "none"}));
  };

  Common train_opts;
  std::string out = "runs", run_id, resume;
  unsigned threads = 0;
  int stop_after = -1;
  auto* train = app.add_subcommand("train", "Train one learner per seed");
  add_common(train, train_opts, true);
  train->add_option("--out", out, "Output root directory");
  train->add_option("--run-id", run_id, "Run directory name (default: timestamp + config hash)");
  train->add_option("--threads", threads, "Parallel seed workers (default: hardware threads)");
  train->add_option("--resume", resume, "Continue an interrupted run directory from its checkpoints");
  train->add_option("--stop-after", stop_after, "Stop each seed after this many episodes");

  Common eval_opts;
  std::string checkpoint, policy, eval_out, trace;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a scripted baseline");
  add_common(eval, eval_opts, false);
  auto* ck_opt = eval->add_option("--checkpoint", checkpoint, "Agent checkpoint");
  eval->add_option("--policy", policy, "Baseline instead of a checkpoint")
      ->check(CLI::IsMember({"random", "greedy_nearest", "max_power_hover"}))
      ->excludes(ck_opt);
  eval->add_option("--out", eval_out, "Write the summary CSV here (stdout otherwise)");
  eval->add_option("--trace", trace, "Export every evaluation step as JSONL (first seed)");

  std::vector<std::string> runs;
  std::string plot_out = "plotdata";
  int window = 0;
  auto* plot = app.add_subcommand("plotdata", "Export reward-curve and summary CSVs for finished runs");
  plot->add_option("runs", runs, "Run directories")->required();
  plot->add_option("--out", plot_out, "Output directory");
  plot->add_option("--window", window, "Smoothing window (default: the runs' recorded window)");

  Common validate_opts;
  auto* validate = app.add_subcommand("validate-config", "Resolve and print a configuration");
  add_common(validate, validate_opts, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      std::mutex log_mu;
      TrainControl ctl;
      ctl.stop_after = stop_after;
      ctl.on_episode = [&](std::uint64_t seed, const EpisodeRecord& r, const TrainStats& s) {
        if ((r.episode + 1) % 10 != 0) return;
        std::lock_guard lock(log_mu);
        std::fprintf(stderr, "seed %llu episode %d reward %.3f bits %.4g energy %.1f J fairness %.3f alpha %.4f\n",
                     static_cast<unsigned long long>(seed), r.episode + 1, r.reward, r.bits, r.energy_j, r.fairness,
                     s.alpha);
      };
      RunResult rr;
      if (!resume.empty()) {
        rr = resume_train(resume, ctl, threads);
      } else {
        rr = cmd_train(resolve(train_opts), out, run_id, ctl, threads);
      }
      std::cout << rr.run_dir.string() << (rr.complete ? "" : " (interrupted)") << '\n';
      return 0;
    }
    if (*eval) {
      ExperimentConfig cfg = resolve(eval_opts);
      const int episodes = eval_opts.episodes > 0 ? eval_opts.episodes : cfg.run.eval_episodes;
      EvalTable table;
      if (!policy.empty()) {
        const auto src = baseline_source(parse_baseline(policy));
        table = evaluate_policy(cfg.scenario, src, cfg.run.seeds, episodes);
        if (!trace.empty()) {
          std::ofstream ts(trace, std::ios::binary);
          evaluate(cfg.scenario, cfg.run.seeds.front(), episodes, src.make(cfg.run.seeds.front()), src.window, &ts);
        }
      } else if (!checkpoint.empty()) {
        table = cmd_eval(checkpoint, cfg.scenario, episodes, cfg.run.seeds);
        if (!trace.empty()) {
          const auto ck = Checkpoint<Scalar>::load(checkpoint);
          ExperimentConfig stored;
          apply_json(stored, nlohmann::json::parse(ck.metadata.at("config")));
          auto agent = make_agent(stored, std::stoull(ck.metadata.at("master_seed")));
          agent.load_checkpoint(ck);
          std::ofstream ts(trace, std::ios::binary);
          evaluate(cfg.scenario, cfg.run.seeds.front(), episodes, agent_policy(agent), agent.window(), &ts);
        }
      } else {
        throw ConfigError("eval", "pass --checkpoint or --policy");
      }
      const std::string text = eval_table_csv({table});
      if (eval_out.empty()) {
        std::cout << text;
      } else {
        write_file(eval_out, text);
        write_file(eval_out + ".seeds.csv", eval_seed_csv({table}));
      }
      return 0;
    }
    if (*plot) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      write_plotdata(cmd_plotdata(dirs, window), plot_out);
      std::cout << plot_out << '\n';
      return 0;
    }
    if (*validate) {
      const auto cfg = resolve(validate_opts);
      std::cout << to_json(cfg).dump(2) << "\nconfig_hash " << config_hash(cfg) << "\nscenario_hash "
                << scenario_hash(cfg) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error [" << e.field() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
