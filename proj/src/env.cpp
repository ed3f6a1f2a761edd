#include "atrs/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "atrs/errors.hpp"

namespace atrs {

void RewardConfig::validate() const {
  for (double l : lambda) {
    if (!std::isfinite(l) || l < 0.0) throw ConfigError("reward weights must be finite and nonnegative");
  }
  if (!std::isfinite(r_conv) || !std::isfinite(r_fail) || r_conv < 0.0 || r_fail < 0.0) {
    throw ConfigError("terminal rewards must be finite and nonnegative");
  }
  if (!(guidance_fraction >= 0.0 && guidance_fraction <= 1.0)) throw ConfigError("guidance fraction outside [0, 1]");
  if (!(n_max_factor >= 1.0)) throw ConfigError("segment budget factor must be at least 1");
  if (!(gate_threshold > -1.0 && gate_threshold < 1.0)) throw ConfigError("gate threshold outside (-1, 1)");
}

double guidance_decay(long episode, long total_episodes, double fraction) {
  const double horizon = fraction * static_cast<double>(total_episodes);
  if (horizon <= 0.0) return 0.0;
  return std::max(0.0, 1.0 - static_cast<double>(episode) / horizon);
}

double log_floor10(double x) {
  if (!(x > 0.0)) return kLogFloor;
  return std::max(kLogFloor, std::log10(x));
}

double residual_trend(const std::deque<double>& history, int window) {
  const std::size_t n = history.size();
  if (n < 2 || window < 2) return 0.0;
  const double scale = 1.0 / static_cast<double>(window - 1);
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += static_cast<double>(k) * scale;
    my += history[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = static_cast<double>(k) * scale - mx;
    sxy += dx * (history[k] - my);
    sxx += dx * dx;
  }
  return std::tanh(sxy / sxx);
}

namespace {

double energy_density(const Segmentd& seg) { return log_floor10(jerk_energy(seg) / seg.duration); }

}  // namespace

std::vector<Observation> observe(const ConsensusAdmm& solver, int n_max) {
  const int n = solver.num_segments();
  std::vector<Observation> obs(static_cast<std::size_t>(n));
  double max_log_eps = kLogFloor, max_log_dual = kLogFloor, max_energy = 0.0, sum_eps = 0.0;
  for (int i = 0; i < n; ++i) {
    const SegmentCtx& ctx = solver.segment(i);
    Observation& o = obs[static_cast<std::size_t>(i)];
    o[kObsLogEps] = log_floor10(ctx.eps);
    o[kObsLogDual] = log_floor10(solver.dual_norm(i));
    o[kObsEnergy] = energy_density(ctx.segment);
    o[kObsTrend] = residual_trend(ctx.history, solver.config().history);
    o[kObsDuration] = ctx.segment.duration;
    // Raw side residuals span many decades, so the bias compares them in log space.
    o[kObsBoundaryBias] = std::tanh(log_floor10(ctx.eps_right) - log_floor10(ctx.eps_left));
    max_log_eps = std::max(max_log_eps, o[kObsLogEps]);
    max_log_dual = std::max(max_log_dual, o[kObsLogDual]);
    max_energy = std::max(max_energy, std::abs(o[kObsEnergy]));
    sum_eps += ctx.eps;
  }
  const double mean_log_eps = log_floor10(sum_eps / static_cast<double>(n));
  const double budget = static_cast<double>(n) / static_cast<double>(n_max);
  for (Observation& o : obs) {
    o[kObsMaxEps] = max_log_eps;
    o[kObsMaxDual] = max_log_dual;
    o[kObsMaxEnergy] = max_energy;
    o[kObsMeanEps] = mean_log_eps;
    o[kObsBudget] = budget;
  }
  return obs;
}

SplitCommand decode_action(const RawAction& raw) {
  const auto c = [](double x) { return std::isnan(x) ? 0.0 : std::clamp(x, -1.0, 1.0); };
  const double gate = c(raw[0]), ratio = c(raw[1]), bias = c(raw[2]), inf = c(raw[3]);
  SplitCommand cmd;
  cmd.gate = gate;
  cmd.spatial_ratio = std::clamp(0.4 * ratio + 0.5, 0.1, 0.9);
  cmd.time_ratio = std::clamp(0.4 * ratio + 0.5 + 0.2 * bias, 0.1, 0.9);
  cmd.inflation = std::clamp(0.3 * inf, 0.0, 0.3);
  return cmd;
}

std::optional<int> elect(const std::vector<RawAction>& actions, double threshold) {
  std::optional<int> winner;
  double best = threshold;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i][0] > best) {
      best = actions[i][0];
      winner = static_cast<int>(i);
    }
  }
  return winner;
}

ResplitEnv::ResplitEnv(ProblemInstance instance, SolverConfig solver, RewardConfig reward)
    : instance_(std::move(instance)), solver_cfg_(solver_config_for(instance_, solver)), reward_(reward) {
  solver_cfg_.validate();
  reward_.validate();
}

int ResplitEnv::step_budget() const { return solver_cfg_.max_iter / solver_cfg_.k_dec; }

std::vector<Observation> ResplitEnv::reset() {
  solver_.emplace(make_solver(instance_, solver_cfg_));
  n_max_ = std::max(1, static_cast<int>(std::ceil(reward_.n_max_factor * solver_->num_segments())));
  steps_ = 0;
  splits_ = 0;
  solver_->iterate_block(solver_cfg_.k_dec);
  done_ = solver_->status().done();
  obs_ = observe(*solver_, n_max_);
  return obs_;
}

StepResult ResplitEnv::step(const std::vector<RawAction>& actions) {
  if (done_ || !solver_) throw std::logic_error("step on a finished episode");
  const int n_before = solver_->num_segments();
  if (static_cast<int>(actions.size()) != n_before) throw std::invalid_argument("one action per segment required");

  StepResult out;
  StepInfo& info = out.info;
  const double prev_log_max = log_floor10(solver_->status().max_residual);
  const auto& lambda = reward_.lambda;

  info.winner = elect(actions, reward_.gate_threshold);
  bool split = false;
  if (info.winner) {
    const int w = *info.winner;
    info.command = decode_action(actions[static_cast<std::size_t>(w)]);
    const Segmentd& parent = solver_->segment(w).segment;
    try {
      solver_->split_segment(w, arc_time(parent, info.command.spatial_ratio), info.command.time_ratio,
                             info.command.inflation);
      split = true;
      ++splits_;
    } catch (const SplitError&) {
      info.split_rejected = true;
    } catch (const ConditioningError&) {
      info.split_rejected = true;
    }
    if (split) {
      const RawAction& a = actions[static_cast<std::size_t>(w)];
      const double delta = obs_[static_cast<std::size_t>(w)][kObsBoundaryBias];
      const double ratio = std::clamp(a[1], -1.0, 1.0), bias = std::clamp(a[2], -1.0, 1.0);
      info.r_split = -lambda[3];
      info.r_bal = -lambda[4] * std::abs(energy_density(solver_->segment(w).segment) -
                                         energy_density(solver_->segment(w + 1).segment));
      info.r_inf = -lambda[5] * info.command.inflation;
      // Rewards moving the split point away from the side with the larger residual.
      info.r_guide = -lambda[6] * (delta * (ratio + bias)) * zeta_;
    } else {
      info.winner.reset();
    }
  }

  solver_->iterate_block(solver_cfg_.k_dec);
  ++steps_;
  const SolverStatus& st = solver_->status();
  obs_ = observe(*solver_, n_max_);

  info.converged = st.converged;
  info.failed = st.failed || (!st.converged && steps_ >= step_budget());
  info.iterations = st.iterations;
  info.segments = solver_->num_segments();
  info.r_prog = lambda[0] * (prev_log_max - log_floor10(st.max_residual));
  info.r_step = -lambda[1];
  if (info.failed) {
    info.r_term = -reward_.r_fail;
  } else if (info.converged) {
    if (solver_->num_segments() >= n_max_) {
      info.r_term = 0.5 * reward_.r_conv;
    } else {
      info.r_term = reward_.r_conv;
      if (instance_.k_base) info.r_term += lambda[2] * static_cast<double>(*instance_.k_base - st.iterations);
    }
  }
  done_ = info.converged || info.failed;
  out.done = done_;

  const double r_sys = info.r_sys();
  out.rewards.assign(static_cast<std::size_t>(n_before), r_sys);
  out.next_observations.resize(static_cast<std::size_t>(n_before));
  for (int i = 0; i < n_before; ++i) {
    const int j = (split && i > *info.winner) ? i + 1 : i;
    out.next_observations[static_cast<std::size_t>(i)] = obs_[static_cast<std::size_t>(j)];
  }
  if (split) out.rewards[static_cast<std::size_t>(*info.winner)] = r_sys + info.r_act();
  out.observations = obs_;
  return out;
}

void TransitionSink::append(std::vector<Transition> batch) {
  std::lock_guard<std::mutex> lock(mu_);
  items_.insert(items_.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
}

std::vector<Transition> TransitionSink::drain() {
  std::lock_guard<std::mutex> lock(mu_);
  return std::exchange(items_, {});
}

}  // namespace atrs
