#include "atrs/train.hpp"

#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

namespace atrs {

std::vector<ProblemInstance> make_instance_pool(int count, std::uint64_t first_seed, double density,
                                                ScaleClass scale, const GeneratorConfig& gen,
                                                const SolverConfig& solver, int threads) {
  std::vector<std::optional<ProblemInstance>> slots(static_cast<std::size_t>(count));
  tbb::task_arena arena(std::max(1, threads));
  arena.execute([&] {
    tbb::parallel_for(0, count, [&](int k) {
      try {
        slots[static_cast<std::size_t>(k)] =
            make_instance(first_seed + static_cast<std::uint64_t>(k), density, scale, gen, solver);
      } catch (const InfeasibleError&) {
      }
    });
  });
  std::vector<ProblemInstance> pool;
  for (auto& s : slots) {
    if (s) pool.push_back(std::move(*s));
  }
  if (2 * pool.size() < static_cast<std::size_t>(count)) {
    throw InfeasibleError("instance pool: most seeds have no feasible instance");
  }
  return pool;
}

PolicyTraining::PolicyTraining(RunConfig cfg, std::vector<ProblemInstance> pool)
    : cfg_(std::move(cfg)), pool_(std::move(pool)), trainer_(cfg_.td3), buffer_(cfg_.td3.buffer_capacity) {
  cfg_.validate();
  if (pool_.empty()) throw ConfigError("training needs a nonempty instance pool");
}

namespace {

struct Slot {
  std::optional<ResplitEnv> env;
  EpisodeLog log;
  StepResult last;
};

}  // namespace

void PolicyTraining::run(const TrainHooks& hooks, int threads) {
  const long total = cfg_.train.episodes;
  const std::size_t warmup = 2 * static_cast<std::size_t>(cfg_.td3.batch_size);
  std::mt19937_64 rollout_rng(cfg_.seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0), unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  tbb::task_arena arena(std::max(1, threads));

  long next_episode = 0, finished = 0;
  const auto finish = [&](EpisodeLog& log) {
    ++finished;
    if (hooks.on_episode) hooks.on_episode(log);
    if (hooks.on_checkpoint && cfg_.train.checkpoint_every > 0 && finished % cfg_.train.checkpoint_every == 0) {
      hooks.on_checkpoint(finished, trainer_);
    }
  };
  // Starts the next episode in `slot`, skipping instances that converge
  // before the first decision.
  const auto start = [&](Slot& slot) {
    slot.env.reset();
    while (next_episode < total) {
      const ProblemInstance& inst = pool_[pick(rollout_rng)];
      EpisodeLog log;
      log.episode = next_episode++;
      log.instance_seed = inst.seed;
      log.sigma = exploration_sigma(cfg_.td3, log.episode, total);
      log.zeta = guidance_decay(log.episode, total, cfg_.reward.guidance_fraction);
      ResplitEnv env(inst, cfg_.solver, cfg_.reward);
      env.set_guidance(log.zeta);
      env.reset();
      log.max_residual_log.push_back(log_floor10(env.solver().status().max_residual));
      if (env.done()) {
        log.converged = env.solver().status().converged;
        log.iterations = env.solver().status().iterations;
        log.final_n = env.solver().num_segments();
        finish(log);
        continue;
      }
      slot.env.emplace(std::move(env));
      slot.log = std::move(log);
      return;
    }
  };

  std::vector<Slot> slots(static_cast<std::size_t>(cfg_.train.envs));
  for (Slot& s : slots) start(s);

  while (true) {
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      if (slots[k].env) active.push_back(k);
    }
    if (active.empty()) break;

    // Batched inference over every agent of every active environment.
    std::vector<Eigen::Index> offsets{0};
    for (std::size_t k : active) offsets.push_back(offsets.back() + slots[k].env->solver().num_segments());
    Eigen::MatrixXd obs(offsets.back(), kObsDim);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto& o = slots[active[a]].env->observations();
      for (std::size_t i = 0; i < o.size(); ++i)
        for (int c = 0; c < kObsDim; ++c) obs(offsets[a] + static_cast<Eigen::Index>(i), c) = o[i][static_cast<std::size_t>(c)];
    }
    const bool warming = buffer_.size() < warmup;
    Eigen::MatrixXd policy;
    if (!warming) policy = trainer_.act(obs);
    std::vector<std::vector<RawAction>> actions(active.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      const double sigma = slots[active[a]].log.sigma;
      for (Eigen::Index r = offsets[a]; r < offsets[a + 1]; ++r) {
        RawAction act;
        for (int c = 0; c < kActDim; ++c) {
          act[static_cast<std::size_t>(c)] =
              warming ? uniform(rollout_rng) : std::clamp(policy(r, c) + sigma * gauss(rollout_rng), -1.0, 1.0);
        }
        actions[a].push_back(act);
      }
      // Gaussian noise of a few hundredths never lifts a closed gate past the
      // election threshold, so split proposals are also injected directly.
      if (!warming && unit(rollout_rng) < cfg_.train.split_exploration) {
        std::uniform_int_distribution<std::size_t> who(0, actions[a].size() - 1);
        RawAction& x = actions[a][who(rollout_rng)];
        x[0] = std::uniform_real_distribution<double>(cfg_.reward.gate_threshold, 1.0)(rollout_rng);
        for (int c = 1; c < kActDim; ++c) x[static_cast<std::size_t>(c)] = uniform(rollout_rng);
      }
    }

    arena.execute([&] {
      tbb::parallel_for(std::size_t{0}, active.size(), [&](std::size_t a) {
        Slot& s = slots[active[a]];
        s.last = s.env->step(actions[a]);
      });
    });

    for (std::size_t a = 0; a < active.size(); ++a) {
      Slot& s = slots[active[a]];
      const StepResult& res = s.last;
      for (std::size_t i = 0; i < res.rewards.size(); ++i) {
        Transition t;
        for (int c = 0; c < kObsDim; ++c) t.state[static_cast<std::size_t>(c)] = obs(offsets[a] + static_cast<Eigen::Index>(i), c);
        t.action = actions[a][i];
        t.reward = res.rewards[i];
        t.next_state = res.next_observations[i];
        t.terminal = res.done;
        buffer_.push(t);
      }
      s.log.episode_return += std::accumulate(res.rewards.begin(), res.rewards.end(), 0.0) /
                              static_cast<double>(res.rewards.size());
      s.log.max_residual_log.push_back(log_floor10(s.env->solver().status().max_residual));
      if (res.done) {
        s.log.converged = res.info.converged;
        s.log.iterations = res.info.iterations;
        s.log.splits = s.env->splits();
        s.log.final_n = res.info.segments;
        finish(s.log);
        start(s);
      }
    }
    for (std::size_t a = 0; a < active.size(); ++a) {
      if (buffer_.size() >= warmup) {
        trainer_.update(make_batch(buffer_.sample(static_cast<std::size_t>(cfg_.td3.batch_size), trainer_.rng())));
      }
    }
  }
}

}  // namespace atrs
