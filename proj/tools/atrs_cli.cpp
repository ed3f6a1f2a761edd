// atrs: instance generation, policy training, evaluation and benchmarks.

#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atrs/bench.hpp"
#include "atrs/config.hpp"
#include "atrs/errors.hpp"
#include "atrs/problem.hpp"
#include "atrs/td3.hpp"
#include "atrs/train.hpp"

namespace fs = std::filesystem;
using namespace atrs;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> trials;
  std::optional<std::string> density;
  std::optional<std::string> scale;
  int threads = 1;
  std::string checkpoint;
  std::string instances;
  std::string method = "atrs";
  std::string timing = "wall";
};

RunConfig resolve(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.td3.seed = *o.seed;
  }
  if (o.trials) cfg.eval.trials = *o.trials;
  if (o.density) cfg.train.density = cfg.eval.density = *o.density;
  if (o.scale) cfg.train.scale = cfg.eval.scale = *o.scale;
  cfg.validate();
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  return os;
}

std::vector<ProblemInstance> load_pool(const std::string& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  if (ec) throw ConfigError("cannot read instance directory " + dir);
  std::sort(files.begin(), files.end());
  std::vector<ProblemInstance> pool;
  for (const auto& f : files) pool.push_back(load_instance(f.string()));
  if (pool.empty()) throw ConfigError("no instances in " + dir);
  return pool;
}

int cmd_gen(const Options& o) {
  const RunConfig cfg = resolve(o);
  const int count = o.trials.value_or(cfg.train.pool_size);
  const std::uint64_t first = o.seed.value_or(cfg.train.pool_seed);
  const auto pool = make_instance_pool(count, first, density_of(cfg.train.density), parse_scale(cfg.train.scale),
                                       cfg.generator, cfg.solver, o.threads);
  ensure_dir(o.out);
  for (const auto& inst : pool) {
    char name[64];
    std::snprintf(name, sizeof(name), "instance_%012llu.json", static_cast<unsigned long long>(inst.seed));
    save_instance(inst, (fs::path(o.out) / name).string());
  }
  std::cout << "wrote " << pool.size() << " of " << count << " instances to " << o.out << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const RunConfig cfg = resolve(o);
  const auto pool = o.instances.empty()
                        ? make_instance_pool(cfg.train.pool_size, cfg.train.pool_seed, density_of(cfg.train.density),
                                             parse_scale(cfg.train.scale), cfg.generator, cfg.solver, o.threads)
                        : load_pool(o.instances);
  ensure_dir(o.out);
  const fs::path out(o.out);
  open_out(out / "config.json") << to_json(cfg);
  std::ofstream log = open_out(out / "train_log.csv");
  log << "episode,instance_seed,return,iterations,converged,splits,final_n,sigma,zeta,max_residual_log10\n";

  PolicyTraining run(cfg, pool);
  TrainHooks hooks;
  hooks.on_episode = [&](const EpisodeLog& e) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%ld,%llu,%.6f,%d,%d,%d,%d,%.6f,%.6f,", e.episode,
                  static_cast<unsigned long long>(e.instance_seed), e.episode_return, e.iterations,
                  e.converged ? 1 : 0, e.splits, e.final_n, e.sigma, e.zeta);
    log << buf;
    for (std::size_t k = 0; k < e.max_residual_log.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%s%.4f", k ? ";" : "", e.max_residual_log[k]);
      log << buf;
    }
    log << '\n';
  };
  hooks.on_checkpoint = [&](long episodes, Td3Trainer& trainer) {
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%06ld.bin", episodes);
    save_checkpoint(trainer, (out / name).string());
    std::cout << "episode " << episodes << ": checkpoint " << name << std::endl;
  };
  run.run(hooks, o.threads);
  save_checkpoint(run.trainer(), (out / "policy.bin").string());
  std::cout << "trained " << cfg.train.episodes << " episodes, " << run.trainer().updates() << " updates; policy at "
            << (out / "policy.bin").string() << "\n";
  return 0;
}

// Runs every method on the same held-out instances, trial-major order.
int run_methods(const Options& o, const std::vector<Method>& methods, const std::string& stem) {
  const RunConfig cfg = resolve(o);
  const Timing timing = o.timing == "off" ? Timing::kOff : Timing::kWall;
  std::optional<Actor> policy;
  for (Method m : methods) {
    if (needs_policy(m) && !policy) {
      if (o.checkpoint.empty()) throw ConfigError("method " + to_string(m) + " needs --checkpoint");
      policy.emplace(load_checkpoint(o.checkpoint).actor);
    }
  }
  const auto pool = o.instances.empty()
                        ? make_instance_pool(cfg.eval.trials, cfg.eval.seed, density_of(cfg.eval.density),
                                             parse_scale(cfg.eval.scale), cfg.generator, cfg.solver, o.threads)
                        : load_pool(o.instances);

  const std::size_t n = pool.size() * methods.size();
  std::vector<TrialMetrics> trials(n);
  tbb::task_arena arena(std::max(1, o.threads));
  arena.execute([&] {
    tbb::parallel_for(std::size_t{0}, n, [&](std::size_t k) {
      const std::size_t i = k / methods.size();
      trials[k] = run_trial(methods[k % methods.size()], pool[i], std::to_string(pool[i].seed), cfg.solver,
                            cfg.reward, policy ? &*policy : nullptr);
    });
  });

  ensure_dir(o.out);
  const fs::path out(o.out);
  {
    std::ofstream os = open_out(out / (stem + "_trials.csv"));
    write_trials_csv(os, trials, timing);
  }
  const auto cells = aggregate(trials, cfg.eval.density, cfg.eval.scale);
  {
    std::ofstream os = open_out(out / (stem + "_summary.csv"));
    write_summary_csv(os, cells, timing);
  }
  {
    std::ofstream os = open_out(out / (stem + "_percentiles.csv"));
    write_percentiles_csv(os, cells);
  }
  std::printf("%-18s %8s %8s %10s %10s %6s\n", "method", "mean_it", "med_it", "time_ms", "cost", "SR%");
  for (const auto& c : cells) {
    std::printf("%-18s %8.1f %8.1f %10.2f %10.3f %6.1f\n", c.method.c_str(), c.mean_iterations, c.median_iterations,
                c.mean_time_ms, c.mean_cost, c.success_rate);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive trajectory re-splitting: instances, training and benchmarks"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Seed override");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--trials", o.trials, "Number of instances / trials");
    sub->add_option("--density", o.density, "Obstacle density")->check(CLI::IsMember({"sparse", "medium", "dense"}));
    sub->add_option("--scale", o.scale, "Distance class")->check(CLI::IsMember({"short", "medium", "long"}));
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  const auto evaluation = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "Policy checkpoint");
    sub->add_option("--instances", o.instances, "Directory of instance files (default: generate held-out seeds)");
    sub->add_option("--timing", o.timing, "Write wall times, or zeros for byte-stable output")
        ->check(CLI::IsMember({"wall", "off"}));
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate benchmark instances");
  common(gen);
  CLI::App* train = app.add_subcommand("train", "Train the split policy");
  common(train);
  train->add_option("--instances", o.instances, "Directory of training instances (default: generate)");
  CLI::App* eval = app.add_subcommand("eval", "Evaluate one method");
  common(eval);
  evaluation(eval);
  eval->add_option("--method", o.method, "fixed | heuristic | atrs | atrs-no-inflation")
      ->check(CLI::IsMember({"fixed", "heuristic", "atrs", "atrs-no-inflation"}));
  CLI::App* bench = app.add_subcommand("bench", "Run all methods and aggregate");
  common(bench);
  evaluation(bench);
  CLI::App* ablate = app.add_subcommand("ablate", "Duration inflation ablation");
  common(ablate);
  evaluation(ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen(o);
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return run_methods(o, {parse_method(o.method)}, "eval");
    if (bench->parsed()) {
      return run_methods(o, {Method::kFixed, Method::kHeuristic, Method::kAtrs, Method::kAtrsNoInflation}, "bench");
    }
    if (ablate->parsed()) return run_methods(o, {Method::kFixed, Method::kAtrsNoInflation, Method::kAtrs}, "ablate");
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible instance pool: " << e.what() << "\n";
    return kExitInfeasible;
  }
  return 0;
}
