#include "atrs/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "atrs/errors.hpp"

namespace atrs {

Method parse_method(const std::string& name) {
  if (name == "fixed") return Method::kFixed;
  if (name == "heuristic") return Method::kHeuristic;
  if (name == "atrs") return Method::kAtrs;
  if (name == "atrs-no-inflation") return Method::kAtrsNoInflation;
  throw ConfigError("unknown method: " + name);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kFixed: return "fixed";
    case Method::kHeuristic: return "heuristic";
    case Method::kAtrs: return "atrs";
    case Method::kAtrsNoInflation: return "atrs-no-inflation";
  }
  return "fixed";
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<RawAction> idle_actions(int n) {
  return std::vector<RawAction>(static_cast<std::size_t>(n), RawAction{-1.0, 0.0, 0.0, -1.0});
}

// Highest residual segment, split in the middle with no inflation.
std::vector<RawAction> heuristic_actions(const ConsensusAdmm& solver, int n_max) {
  auto actions = idle_actions(solver.num_segments());
  if (solver.num_segments() >= n_max) return actions;
  int worst = 0;
  for (int i = 1; i < solver.num_segments(); ++i) {
    if (solver.segment(i).eps > solver.segment(worst).eps) worst = i;
  }
  actions[static_cast<std::size_t>(worst)][0] = 1.0;
  return actions;
}

}  // namespace

TrialMetrics run_trial(Method method, const ProblemInstance& inst, const std::string& instance_id,
                       const SolverConfig& solver, const RewardConfig& reward, const Actor* policy) {
  if (needs_policy(method) && policy == nullptr) {
    throw ConfigError("method " + to_string(method) + " needs a policy checkpoint");
  }
  std::optional<Actor> actor;
  if (policy) actor.emplace(*policy);

  TrialMetrics m;
  m.method = method;
  m.instance = instance_id;
  const auto t_total = Clock::now();
  ResplitEnv env(inst, solver, reward);
  auto t = Clock::now();
  env.reset();
  m.solver_ms += ms_since(t);

  while (!env.done()) {
    std::vector<RawAction> actions;
    const int n = env.solver().num_segments();
    switch (method) {
      case Method::kFixed:
        actions = idle_actions(n);
        break;
      case Method::kHeuristic:
        actions = heuristic_actions(env.solver(), env.n_max());
        break;
      case Method::kAtrs:
      case Method::kAtrsNoInflation: {
        t = Clock::now();
        const auto& obs = env.observations();
        Eigen::MatrixXd x(n, kObsDim);
        for (int i = 0; i < n; ++i)
          for (int c = 0; c < kObsDim; ++c) x(i, c) = obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        const Eigen::MatrixXd a = actor->forward(x);
        actions.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
          for (int c = 0; c < kActDim; ++c) actions[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = a(i, c);
        if (method == Method::kAtrsNoInflation) {
          for (auto& act : actions) act[3] = -1.0;
        }
        m.inference_ms += ms_since(t);
        break;
      }
    }
    t = Clock::now();
    const StepResult res = env.step(actions);
    m.solver_ms += ms_since(t);
    if (res.info.winner) m.split_inflations.push_back(res.info.command.inflation);
  }
  m.time_ms = ms_since(t_total);

  const SolverStatus& st = env.solver().status();
  m.iterations = st.iterations;
  m.success = st.converged && st.iterations <= solver.max_iter;
  m.cost = env.solver().jerk_energy();
  m.final_n = env.solver().num_segments();
  m.splits = env.splits();
  return m;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<CellSummary> aggregate(const std::vector<TrialMetrics>& trials, const std::string& density,
                                   const std::string& scale) {
  std::vector<Method> order;
  for (const auto& t : trials) {
    if (std::find(order.begin(), order.end(), t.method) == order.end()) order.push_back(t.method);
  }
  std::vector<CellSummary> out;
  for (Method method : order) {
    std::vector<double> iters, times, costs;
    int successes = 0;
    for (const auto& t : trials) {
      if (t.method != method) continue;
      iters.push_back(t.iterations);
      times.push_back(t.time_ms);
      costs.push_back(t.cost);
      successes += t.success ? 1 : 0;
    }
    CellSummary c;
    c.method = to_string(method);
    c.density = density;
    c.scale = scale;
    c.trials = static_cast<int>(iters.size());
    const auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    c.mean_iterations = mean(iters);
    c.median_iterations = percentile(iters, 50.0);
    c.mean_time_ms = mean(times);
    c.mean_cost = mean(costs);
    c.median_cost = percentile(costs, 50.0);
    c.success_rate = 100.0 * successes / static_cast<double>(c.trials);
    for (std::size_t k = 0; k < kPercentiles.size(); ++k) c.iteration_percentiles[k] = percentile(iters, kPercentiles[k]);
    out.push_back(c);
  }
  return out;
}

namespace {

std::string num(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

void write_trials_csv(std::ostream& os, const std::vector<TrialMetrics>& trials, Timing timing) {
  os << "method,instance,iterations,time_ms,cost,success,final_n,splits\n";
  for (const auto& t : trials) {
    os << to_string(t.method) << ',' << t.instance << ',' << t.iterations << ','
       << num(timing == Timing::kWall ? t.time_ms : 0.0, "%.3f") << ',' << num(t.cost, "%.9g") << ','
       << (t.success ? 1 : 0) << ',' << t.final_n << ',' << t.splits << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells, Timing timing) {
  os << "method,density,scale,trials,mean_iterations,median_iterations,mean_time_ms,mean_cost,median_cost,"
        "success_rate\n";
  for (const auto& c : cells) {
    os << c.method << ',' << c.density << ',' << c.scale << ',' << c.trials << ',' << num(c.mean_iterations, "%.2f")
       << ',' << num(c.median_iterations, "%.2f") << ',' << num(timing == Timing::kWall ? c.mean_time_ms : 0.0, "%.3f")
       << ',' << num(c.mean_cost, "%.9g") << ',' << num(c.median_cost, "%.9g") << ',' << num(c.success_rate, "%.1f")
       << '\n';
  }
}

void write_percentiles_csv(std::ostream& os, const std::vector<CellSummary>& cells) {
  os << "method,density,scale,p5,p25,p50,p75,p95\n";
  for (const auto& c : cells) {
    os << c.method << ',' << c.density << ',' << c.scale;
    for (double p : c.iteration_percentiles) os << ',' << num(p, "%.2f");
    os << '\n';
  }
}

}  // namespace atrs
