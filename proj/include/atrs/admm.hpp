// Consensus ADMM over a chain of quintic segments.
//
// Each segment owns a private copy of its two boundary states and agrees with
// its neighbours through interface consensus variables z. Box corridors and
// per-axis velocity/acceleration limits enter as sampled projection blocks, so
// every segment subproblem stays a dense 6x6 solve per axis.

#ifndef ATRS_ADMM_HPP_
#define ATRS_ADMM_HPP_

#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "atrs/polynomial.hpp"

namespace atrs {

struct SolverConfig {
  double rho = 1.0;
  double eps_abs = 1e-4;
  double eps_rel = 1e-3;
  int max_iter = 2000;
  int k_dec = 25;
  int samples = 8;  // constraint samples per segment, 0 disables constraints
  double v_max = 3.0;
  double a_max = 6.0;
  int history = 10;
  int threads = 1;

  void validate() const;
};

/// Axis-aligned region in workspace coordinates.
struct AxisBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static AxisBox unbounded(int axes);
  bool contains(const Eigen::VectorXd& p, double tol = 0.0) const;
};

struct InterfaceVar {
  BoundaryStated z;
  BoundaryStated z_prev;
  // Scaled duals of the two boundary copies meeting here: the copy held by the
  // segment that ends at this interface and the one held by the segment that
  // starts at it.
  BoundaryStated dual_in;
  BoundaryStated dual_out;
  bool fixed = false;
};

struct SegmentCtx {
  Segmentd segment;
  AxisBox region;
  std::vector<double> sample_times;
  // Sampled [p; v; a] rows (3S) by axis (m): projected targets, scaled duals,
  // bounds and the projections of the previous iteration.
  Eigen::MatrixXd w, u, lo, hi, w_prev;
  std::deque<double> history;  // recent log10 eps, newest at back
  double eps = 0.0;
  double eps_left = 0.0;
  double eps_right = 0.0;
  double constraint_residual = 0.0;  // squared norm of sample - projection
};

struct SolverStatus {
  int iterations = 0;
  bool converged = false;
  bool failed = false;
  double max_residual = 0.0;
  double mean_residual = 0.0;
  double primal_norm = 0.0;
  double dual_norm = 0.0;
  double eps_primal = 0.0;
  double eps_dual = 0.0;

  bool done() const { return converged || failed; }
};

class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConditioningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConsensusAdmm {
 public:
  /// `waypoints` is m x (N+1); `durations` and `regions` have N entries. The
  /// first and last waypoints are rest states and stay fixed.
  ConsensusAdmm(const Eigen::MatrixXd& waypoints, const std::vector<double>& durations,
                std::vector<AxisBox> regions, SolverConfig cfg);

  ConsensusAdmm(std::vector<InterfaceVar> interfaces, std::vector<Segmentd> segments,
                std::vector<AxisBox> regions, SolverConfig cfg);

  /// Segment x-update: minimizer of jerk energy plus the consensus and sample
  /// penalty terms for segment i, given the current z, w and duals.
  Segmentd local_update(int i) const;

  /// z-averaging, consensus dual ascent, sample projection and sample duals.
  void consensus_and_dual_update();

  /// Fills per-segment eps, appends them to the histories and returns the
  /// global aggregates. Call once per iteration after the consensus update.
  SolverStatus compute_residuals();

  /// Runs up to k full iterations, stopping on convergence or max_iter.
  SolverStatus iterate_block(int k);

  /// Boyd-style stopping test on the last computed residual norms.
  SolverStatus check_converged();

  /// Replaces segment i by two children meeting at the parent state at
  /// local time t_split. Children durations are ratio*T*(1+inflation) and
  /// (1-ratio)*T*(1+inflation).
  void split_segment(int i, double t_split, double time_ratio, double inflation);

  int num_segments() const { return static_cast<int>(segments_.size()); }
  int axes() const { return axes_; }
  const SolverConfig& config() const { return cfg_; }
  const SolverStatus& status() const { return status_; }
  const std::vector<SegmentCtx>& segments() const { return segments_; }
  const std::vector<InterfaceVar>& interfaces() const { return interfaces_; }
  const SegmentCtx& segment(int i) const { return segments_.at(static_cast<std::size_t>(i)); }

  Trajectoryd trajectory() const;
  double jerk_energy() const;
  /// Scaled-by-rho norm of the two consensus duals held by segment i.
  double dual_norm(int i) const;
  /// Worst box/limit violation over `per_segment` uniform samples.
  double max_violation(int per_segment = 64) const;

  /// Left and right boundary states of segment i's current polynomial.
  BoundaryStated left_state(int i) const;
  BoundaryStated right_state(int i) const;

 private:
  void prepare(SegmentCtx& ctx) const;
  void refresh_factor(int i);
  void run_local_updates();

  // Over-aligned so AVX-512 reductions on the 6x6 members peel the same way at
  // every heap address; otherwise results drift in the last bits between runs.
  struct alignas(64) Factor {
    Eigen::LLT<BasisSquare<double>> llt;
    BasisSquare<double> boundary;     // 6x6 boundary map B
    Eigen::MatrixXd sample_basis;     // 3S x 6 map Phi
  };

  SolverConfig cfg_;
  int axes_ = 0;
  std::vector<SegmentCtx> segments_;
  std::vector<InterfaceVar> interfaces_;
  std::vector<Factor> factors_;
  SolverStatus status_;
  bool residuals_ready_ = false;
  struct WorkerPool;
  std::shared_ptr<WorkerPool> pool_;
};

}  // namespace atrs

#endif  // ATRS_ADMM_HPP_
