// Run configuration: one JSON document holding solver, reward, TD3,
// generator, training and evaluation settings.

#ifndef ATRS_CONFIG_HPP_
#define ATRS_CONFIG_HPP_

#include <cstdint>
#include <string>

#include "atrs/admm.hpp"
#include "atrs/env.hpp"
#include "atrs/problem.hpp"
#include "atrs/td3.hpp"

namespace atrs {

struct TrainConfig {
  long episodes = 10000;
  int envs = 4;                  // environments stepped in lockstep
  long checkpoint_every = 1000;  // episodes, 0 disables periodic checkpoints
  std::string density = "sparse";
  std::string scale = "short";
  int pool_size = 256;
  std::uint64_t pool_seed = 1000;
  double split_exploration = 0.05;  // chance per decision step of one random split proposal
};

struct EvalConfig {
  int trials = 50;
  std::uint64_t seed = 900000;  // held-out instance seeds start here
  std::string density = "sparse";
  std::string scale = "short";
};

struct RunConfig {
  std::uint64_t seed = 1;
  SolverConfig solver;
  RewardConfig reward;
  Td3Config td3;
  GeneratorConfig generator;
  TrainConfig train;
  EvalConfig eval;

  /// Throws ConfigError on any out-of-range value.
  void validate() const;
};

/// Missing keys keep their defaults; unknown keys are errors.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string to_json(const RunConfig& cfg);

}  // namespace atrs

#endif  // ATRS_CONFIG_HPP_
