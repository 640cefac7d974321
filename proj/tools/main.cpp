#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "merl/harness.hpp"

namespace {

merl::ExperimentConfig build_config(const std::string& config_path,
                                    const std::vector<std::string>& overrides,
                                    const std::string& out_dir, long seed,
                                    const std::vector<std::uint64_t>& seeds) {
  merl::ExperimentConfig cfg =
      config_path.empty() ? merl::control_profile() : merl::load_config(config_path);
  for (const auto& kv : overrides) merl::apply_override(cfg, kv);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
  if (!seeds.empty()) cfg.seeds = seeds;
  return cfg;
}

void print_run(const merl::RunResult& r) {
  if (r.failed)
    std::cout << "FAILED " << r.run_dir << ": " << r.error << "\n";
  else
    std::cout << r.run_dir << "  final_score=" << r.final_score << "  episodes=" << r.episodes
              << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPO with auxiliary value-head training (variance-explained and next-state heads)"};
  app.require_subcommand(1);

  std::string config_path, out_dir, task_name = "task";
  std::vector<std::string> overrides;
  long seed = -1;
  std::vector<std::uint64_t> seeds;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--override", overrides, "config override key=value (repeatable)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "single seed (overrides config seed list)");
    sub->add_option("--seeds", seeds, "seed list (overrides config seed list)")->delimiter(',');
  };

  auto* train = app.add_subcommand("train", "train one run per configured seed");
  add_common(train);

  auto* ablate = app.add_subcommand("ablate", "run the 4-variant head ablation grid");
  add_common(ablate);

  auto* transfer = app.add_subcommand("transfer", "mid-training task switch plus control run");
  add_common(transfer);

  auto* aggregate = app.add_subcommand("aggregate", "aggregate metrics files across seeds");
  std::vector<std::string> files;
  std::vector<std::string> groups;
  std::string agg_out = ".";
  aggregate->add_option("files", files, "metrics.jsonl files forming one run group");
  aggregate->add_option("--group", groups, "named group: name=file1,file2 (repeatable)");
  aggregate->add_option("--out", agg_out, "directory for csv/json outputs");
  aggregate->add_option("--task", task_name, "task label for the comparison row");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every loss gradient");
  merl::GradcheckOptions gopt;
  long gseed = 0;
  gradcheck->add_option("--instances", gopt.instances, "random instances per loss");
  gradcheck->add_option("--seed", gseed, "rng seed");
  gradcheck->add_option("--obs-dim", gopt.obs_dim, "observation dimension");
  gradcheck->add_option("--hidden", gopt.hidden, "hidden width");
  gradcheck->add_option("--batch", gopt.batch, "minibatch size");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const auto cfg = build_config(config_path, overrides, out_dir, seed, seeds);
      for (std::uint64_t s : cfg.seeds) print_run(merl::run_experiment(cfg, s));
    } else if (ablate->parsed()) {
      const auto cfg = build_config(config_path, overrides, out_dir, seed, seeds);
      for (const auto& r : merl::run_ablation(cfg)) print_run(r);
    } else if (transfer->parsed()) {
      const auto cfg = build_config(config_path, overrides, out_dir, seed, seeds);
      for (const auto& tr : merl::run_transfer(cfg)) {
        print_run(tr.transfer);
        std::cout << "  continuity: pre=" << tr.transfer.hash_pre_switch
                  << " post=" << tr.transfer.hash_post_switch
                  << (tr.transfer.hash_pre_switch == tr.transfer.hash_post_switch ? " (equal)"
                                                                                  : " (MISMATCH)")
                  << "\n";
        print_run(tr.control);
      }
    } else if (aggregate->parsed()) {
      std::filesystem::create_directories(agg_out);
      if (!files.empty()) {
        const auto s = merl::aggregate_seeds(files);
        merl::write_aggregate_csv(s, agg_out + "/aggregate.csv");
        std::cout << "final: " << s.final_mean << " +/- " << s.final_std
                  << (s.single_seed ? "  (single seed: std is 0 by definition)" : "") << "\n";
      }
      std::vector<std::pair<std::string, merl::AggregateSummary>> named;
      for (const auto& g : groups) {
        const auto eq = g.find('=');
        if (eq == std::string::npos) throw merl::ConfigError("--group must be name=files");
        const std::string name = g.substr(0, eq);
        std::vector<std::string> gfiles;
        std::string item;
        std::istringstream ss(g.substr(eq + 1));
        while (std::getline(ss, item, ',')) gfiles.push_back(item);
        const auto s = merl::aggregate_seeds(gfiles);
        merl::write_aggregate_csv(s, agg_out + "/group_" + name + ".csv");
        std::cout << name << ": final " << s.final_mean << " +/- " << s.final_std << "\n";
        named.emplace_back(name, s);
      }
      if (named.size() >= 2) {
        for (std::size_t i = 1; i < named.size(); ++i)
          std::cout << merl::comparison_row(task_name, named[0].second, named[i].second) << "\n";
      }
      if (files.empty() && groups.empty())
        throw merl::UsageError("aggregate: give metrics files or --group");
    } else if (gradcheck->parsed()) {
      gopt.seed = static_cast<std::uint64_t>(gseed);
      const auto report = merl::run_gradcheck(gopt);
      for (const auto& e : report.entries)
        std::printf("%-36s max_rel_err=%.3e  tol=%.0e  %s\n", e.name.c_str(), e.max_rel_err,
                    e.tolerance, e.pass ? "ok" : "FAIL");
      if (!report.all_pass) return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
