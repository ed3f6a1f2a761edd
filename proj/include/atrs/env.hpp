// Multi-agent re-splitting environment: one agent per trajectory segment,
// one shared decision every K_dec solver iterations.

#ifndef ATRS_ENV_HPP_
#define ATRS_ENV_HPP_

#include <array>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "atrs/admm.hpp"
#include "atrs/problem.hpp"

namespace atrs {

inline constexpr int kObsDim = 11;
inline constexpr int kActDim = 4;
inline constexpr double kLogFloor = -12.0;

using Observation = std::array<double, kObsDim>;
using RawAction = std::array<double, kActDim>;  // gate, ratio, bias, inf

enum ObsIndex : int {
  kObsLogEps = 0,
  kObsLogDual,
  kObsEnergy,
  kObsTrend,
  kObsDuration,
  kObsBoundaryBias,
  kObsMaxEps,
  kObsMaxDual,
  kObsMaxEnergy,
  kObsMeanEps,
  kObsBudget,
};

struct SplitCommand {
  double spatial_ratio = 0.5;
  double time_ratio = 0.5;
  double inflation = 0.0;
  double gate = 0.0;
};

struct RewardConfig {
  std::array<double, 7> lambda{1.0, 0.05, 0.01, 0.5, 0.1, 0.5, 0.2};
  double r_conv = 10.0;
  double r_fail = 10.0;
  double guidance_fraction = 0.3;  // share of training episodes over which zeta decays to 0
  double n_max_factor = 4.0;
  double gate_threshold = 0.3;

  void validate() const;
};

/// Linear decay from 1 at episode 0 to 0 at guidance_fraction * total.
double guidance_decay(long episode, long total_episodes, double fraction);

double log_floor10(double x);

/// Least-squares slope of the history against x = k / (H - 1), squashed by tanh.
double residual_trend(const std::deque<double>& history, int window);

std::vector<Observation> observe(const ConsensusAdmm& solver, int n_max);

SplitCommand decode_action(const RawAction& raw);

/// Index of the largest gate strictly above `threshold`, lowest index on ties.
std::optional<int> elect(const std::vector<RawAction>& actions, double threshold);

struct StepInfo {
  std::optional<int> winner;
  SplitCommand command;
  bool split_rejected = false;
  double r_prog = 0.0;
  double r_step = 0.0;
  double r_term = 0.0;
  double r_split = 0.0;
  double r_bal = 0.0;
  double r_inf = 0.0;
  double r_guide = 0.0;
  bool converged = false;
  bool failed = false;
  int iterations = 0;
  int segments = 0;

  double r_sys() const { return r_prog + r_step + r_term; }
  double r_act() const { return r_split + r_bal + r_inf + r_guide; }
};

struct StepResult {
  std::vector<double> rewards;                // one per agent that acted
  std::vector<Observation> next_observations;  // successor state of each acting agent
  std::vector<Observation> observations;       // current agents, for the next decision
  bool done = false;
  StepInfo info;
};

class ResplitEnv {
 public:
  ResplitEnv(ProblemInstance instance, SolverConfig solver, RewardConfig reward);

  /// Rebuilds the solver and runs the first K_dec iterations.
  std::vector<Observation> reset();

  StepResult step(const std::vector<RawAction>& actions);

  void set_guidance(double zeta) { zeta_ = zeta; }

  bool done() const { return done_; }
  int n_max() const { return n_max_; }
  int decision_steps() const { return steps_; }
  int step_budget() const;
  int splits() const { return splits_; }
  const ConsensusAdmm& solver() const { return *solver_; }
  const ProblemInstance& instance() const { return instance_; }
  const std::vector<Observation>& observations() const { return obs_; }

 private:
  ProblemInstance instance_;
  SolverConfig solver_cfg_;
  RewardConfig reward_;
  std::optional<ConsensusAdmm> solver_;
  std::vector<Observation> obs_;
  int n_max_ = 0;
  int steps_ = 0;
  int splits_ = 0;
  bool done_ = true;
  double zeta_ = 0.0;
};

struct Transition {
  Observation state;
  RawAction action;
  double reward = 0.0;
  Observation next_state;
  bool terminal = false;
};

/// Thread-safe append-only collection of transitions.
class TransitionSink {
 public:
  void append(std::vector<Transition> batch);
  std::vector<Transition> drain();

 private:
  std::mutex mu_;
  std::vector<Transition> items_;
};

}  // namespace atrs

#endif  // ATRS_ENV_HPP_
