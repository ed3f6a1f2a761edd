// Trial runner for the four solve strategies and the aggregation behind the
// benchmark tables.

#ifndef ATRS_BENCH_HPP_
#define ATRS_BENCH_HPP_

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atrs/env.hpp"
#include "atrs/problem.hpp"
#include "atrs/td3.hpp"

namespace atrs {

enum class Method { kFixed, kHeuristic, kAtrs, kAtrsNoInflation };

Method parse_method(const std::string& name);
std::string to_string(Method m);
inline bool needs_policy(Method m) { return m == Method::kAtrs || m == Method::kAtrsNoInflation; }

struct TrialMetrics {
  Method method = Method::kFixed;
  std::string instance;
  int iterations = 0;
  double time_ms = 0.0;  // solver + inference
  double cost = 0.0;     // jerk energy of the final trajectory
  bool success = false;
  int final_n = 0;
  int splits = 0;
  double solver_ms = 0.0;
  double inference_ms = 0.0;
  std::vector<double> split_inflations;
};

/// Runs one strategy to convergence or failure. `policy` is required for the
/// learned methods and is used for inference only.
TrialMetrics run_trial(Method method, const ProblemInstance& inst, const std::string& instance_id,
                       const SolverConfig& solver, const RewardConfig& reward, const Actor* policy = nullptr);

/// Linear interpolation between order statistics; q in [0, 100].
double percentile(std::vector<double> values, double q);

struct CellSummary {
  std::string method, density, scale;
  int trials = 0;
  double mean_iterations = 0.0;
  double median_iterations = 0.0;
  double mean_time_ms = 0.0;
  double mean_cost = 0.0;
  double median_cost = 0.0;
  double success_rate = 0.0;  // percent
  std::array<double, 5> iteration_percentiles{};  // 5, 25, 50, 75, 95
};

inline constexpr std::array<double, 5> kPercentiles{5.0, 25.0, 50.0, 75.0, 95.0};

/// One summary per method present in `trials`, in first-appearance order.
std::vector<CellSummary> aggregate(const std::vector<TrialMetrics>& trials, const std::string& density,
                                   const std::string& scale);

enum class Timing { kWall, kOff };

void write_trials_csv(std::ostream& os, const std::vector<TrialMetrics>& trials, Timing timing = Timing::kWall);
void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells, Timing timing = Timing::kWall);
void write_percentiles_csv(std::ostream& os, const std::vector<CellSummary>& cells);

}  // namespace atrs

#endif  // ATRS_BENCH_HPP_
