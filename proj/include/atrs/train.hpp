// Lockstep rollout over several environments feeding one replay buffer and
// one TD3 trainer.

#ifndef ATRS_TRAIN_HPP_
#define ATRS_TRAIN_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "atrs/config.hpp"
#include "atrs/env.hpp"
#include "atrs/problem.hpp"
#include "atrs/td3.hpp"

namespace atrs {

/// Instances for seeds first_seed, first_seed + 1, ... generated in parallel.
/// Seeds whose sampling fails are skipped; throws InfeasibleError if more
/// than half fail.
std::vector<ProblemInstance> make_instance_pool(int count, std::uint64_t first_seed, double density,
                                                ScaleClass scale, const GeneratorConfig& gen,
                                                const SolverConfig& solver, int threads = 1);

struct EpisodeLog {
  long episode = 0;
  std::uint64_t instance_seed = 0;
  double episode_return = 0.0;  // sum over steps of the mean agent reward
  int iterations = 0;
  bool converged = false;
  int splits = 0;
  int final_n = 0;
  double sigma = 0.0;
  double zeta = 0.0;
  std::vector<double> max_residual_log;  // log10 of the worst segment residual after each block
};

struct TrainHooks {
  std::function<void(const EpisodeLog&)> on_episode;
  /// Called with the number of finished episodes every checkpoint_every episodes.
  std::function<void(long, Td3Trainer&)> on_checkpoint;
};

class PolicyTraining {
 public:
  PolicyTraining(RunConfig cfg, std::vector<ProblemInstance> pool);

  /// Runs the configured episode budget. Deterministic for a fixed config
  /// regardless of `threads`.
  void run(const TrainHooks& hooks = {}, int threads = 1);

  Td3Trainer& trainer() { return trainer_; }
  const ReplayBuffer& buffer() const { return buffer_; }

 private:
  RunConfig cfg_;
  std::vector<ProblemInstance> pool_;
  Td3Trainer trainer_;
  ReplayBuffer buffer_;
};

}  // namespace atrs

#endif  // ATRS_TRAIN_HPP_
