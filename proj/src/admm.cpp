#include "atrs/admm.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "atrs/errors.hpp"

namespace atrs {

namespace {

constexpr double kLogFloor = -12.0;

double log_floor(double v) {
  return v > 0.0 ? std::max(std::log10(v), kLogFloor) : kLogFloor;
}

// Scaled-time diagonal D with c = D * c_hat, c_hat the coefficients in t/T.
Eigen::Matrix<double, kNumCoeffs, 1> time_scaling(double duration) {
  Eigen::Matrix<double, kNumCoeffs, 1> d;
  double inv = 1.0;
  for (int j = 0; j < kNumCoeffs; ++j) {
    d(j) = inv;
    inv /= duration;
  }
  return d;
}

BoundaryStated rest_state(const Eigen::VectorXd& p) {
  const int m = static_cast<int>(p.size());
  BoundaryStated s = BoundaryStated::Zero(m * kContinuity);
  s.head(m) = p;
  return s;
}

}  // namespace

struct ConsensusAdmm::WorkerPool {
  explicit WorkerPool(int threads) : arena(threads) {}
  tbb::task_arena arena;
};

void SolverConfig::validate() const {
  if (!(rho > 0.0)) throw ConfigError("rho must be positive");
  if (!(eps_abs > 0.0) || !(eps_rel > 0.0)) throw ConfigError("tolerances must be positive");
  if (max_iter < 1 || k_dec < 1) throw ConfigError("iteration limits must be >= 1");
  if (samples == 1 || samples < 0) throw ConfigError("samples must be 0 or >= 2");
  if (history < 2) throw ConfigError("history window must be >= 2");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(v_max > 0.0) || !(a_max > 0.0)) throw ConfigError("limits must be positive");
}

AxisBox AxisBox::unbounded(int axes) {
  const double inf = std::numeric_limits<double>::infinity();
  return {Eigen::VectorXd::Constant(axes, -inf), Eigen::VectorXd::Constant(axes, inf)};
}

bool AxisBox::contains(const Eigen::VectorXd& p, double tol) const {
  return ((p - lo).array() >= -tol).all() && ((hi - p).array() >= -tol).all();
}

ConsensusAdmm::ConsensusAdmm(const Eigen::MatrixXd& waypoints, const std::vector<double>& durations,
                             std::vector<AxisBox> regions, SolverConfig cfg) {
  const int n = static_cast<int>(durations.size());
  if (n < 1 || waypoints.cols() != n + 1) {
    throw std::invalid_argument("need N >= 1 durations and N + 1 waypoints");
  }
  const int m = static_cast<int>(waypoints.rows());
  std::vector<InterfaceVar> ifaces(static_cast<std::size_t>(n + 1));
  for (int j = 0; j <= n; ++j) {
    BoundaryStated z = rest_state(waypoints.col(j));
    if (j > 0 && j < n) {
      Eigen::VectorXd v = (waypoints.col(j + 1) - waypoints.col(j - 1)) /
                          (durations[static_cast<std::size_t>(j - 1)] + durations[static_cast<std::size_t>(j)]);
      z.segment(m, m) = v.cwiseMax(-cfg.v_max).cwiseMin(cfg.v_max);
    }
    auto& f = ifaces[static_cast<std::size_t>(j)];
    f.z = z;
    f.fixed = (j == 0 || j == n);
  }
  std::vector<Segmentd> segs;
  segs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    segs.push_back(fit_boundary(ifaces[static_cast<std::size_t>(i)].z, ifaces[static_cast<std::size_t>(i + 1)].z,
                                durations[static_cast<std::size_t>(i)])
                       .segment);
  }
  *this = ConsensusAdmm(std::move(ifaces), std::move(segs), std::move(regions), cfg);
}

ConsensusAdmm::ConsensusAdmm(std::vector<InterfaceVar> interfaces, std::vector<Segmentd> segments,
                             std::vector<AxisBox> regions, SolverConfig cfg)
    : cfg_(cfg), interfaces_(std::move(interfaces)) {
  cfg_.validate();
  const std::size_t n = segments.size();
  if (n < 1 || interfaces_.size() != n + 1 || regions.size() != n) {
    throw std::invalid_argument("inconsistent segment / interface / region counts");
  }
  axes_ = segments.front().axes();
  const int dim = axes_ * kContinuity;
  for (auto& f : interfaces_) {
    if (f.z.size() != dim) throw std::invalid_argument("interface state has wrong length");
    if (f.z_prev.size() != dim) f.z_prev = f.z;
    if (f.dual_in.size() != dim) f.dual_in = BoundaryStated::Zero(dim);
    if (f.dual_out.size() != dim) f.dual_out = BoundaryStated::Zero(dim);
  }
  segments_.resize(n);
  factors_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    segments_[i].segment = std::move(segments[i]);
    segments_[i].region = std::move(regions[i]);
    prepare(segments_[i]);
    refresh_factor(static_cast<int>(i));
  }
  if (cfg_.threads > 1) pool_ = std::make_shared<WorkerPool>(cfg_.threads);
}

void ConsensusAdmm::prepare(SegmentCtx& ctx) const {
  const int s = cfg_.samples;
  const int m = axes_;
  ctx.sample_times.resize(static_cast<std::size_t>(s));
  for (int k = 0; k < s; ++k) {
    ctx.sample_times[static_cast<std::size_t>(k)] = ctx.segment.duration * double(k) / double(s - 1);
  }
  ctx.lo.resize(kContinuity * s, m);
  ctx.hi.resize(kContinuity * s, m);
  ctx.w.resize(kContinuity * s, m);
  for (int k = 0; k < s; ++k) {
    const double t = ctx.sample_times[static_cast<std::size_t>(k)];
    for (int order = 0; order < kContinuity; ++order) {
      const int row = kContinuity * k + order;
      if (order == 0) {
        ctx.lo.row(row) = ctx.region.lo.transpose();
        ctx.hi.row(row) = ctx.region.hi.transpose();
      } else {
        const double lim = order == 1 ? cfg_.v_max : cfg_.a_max;
        ctx.lo.row(row).setConstant(-lim);
        ctx.hi.row(row).setConstant(lim);
      }
      ctx.w.row(row) = evaluate(ctx.segment, t, order).transpose();
    }
  }
  ctx.w = ctx.w.cwiseMax(ctx.lo).cwiseMin(ctx.hi);
  ctx.w_prev = ctx.w;
  ctx.u = Eigen::MatrixXd::Zero(kContinuity * s, m);
  ctx.history.clear();
  ctx.eps = ctx.eps_left = ctx.eps_right = ctx.constraint_residual = 0.0;
}

void ConsensusAdmm::refresh_factor(int i) {
  const SegmentCtx& ctx = segments_[static_cast<std::size_t>(i)];
  const double duration = ctx.segment.duration;
  const auto d = time_scaling(duration);
  Factor& f = factors_[static_cast<std::size_t>(i)];
  f.boundary = boundary_matrix(duration) * d.asDiagonal();
  f.sample_basis.resize(kContinuity * cfg_.samples, kNumCoeffs);
  for (int k = 0; k < cfg_.samples; ++k) {
    for (int order = 0; order < kContinuity; ++order) {
      f.sample_basis.row(kContinuity * k + order) =
          basis_row(ctx.sample_times[static_cast<std::size_t>(k)], order) * d.asDiagonal();
    }
  }
  const BasisSquare<double> q = d.asDiagonal() * jerk_gram(duration) * d.asDiagonal();
  BasisSquare<double> lhs = 2.0 * q + cfg_.rho * f.boundary.transpose() * f.boundary;
  if (cfg_.samples > 0) lhs += cfg_.rho * f.sample_basis.transpose() * f.sample_basis;
  f.llt.compute(lhs);
  if (f.llt.info() != Eigen::Success) {
    throw ConditioningError("segment normal system is singular (degenerate duration)");
  }
}

BoundaryStated ConsensusAdmm::left_state(int i) const {
  return state_at(segments_.at(static_cast<std::size_t>(i)).segment, 0.0);
}

BoundaryStated ConsensusAdmm::right_state(int i) const {
  const auto& seg = segments_.at(static_cast<std::size_t>(i)).segment;
  return state_at(seg, seg.duration);
}

Segmentd ConsensusAdmm::local_update(int i) const {
  const auto idx = static_cast<std::size_t>(i);
  const SegmentCtx& ctx = segments_.at(idx);
  const Factor& f = factors_[idx];
  const InterfaceVar& left = interfaces_[idx];
  const InterfaceVar& right = interfaces_[idx + 1];
  const int m = axes_;
  const auto d = time_scaling(ctx.segment.duration);

  CoeffMatrix<double> coeffs(m, kNumCoeffs);
  Eigen::Matrix<double, kNumCoeffs, 1> target;
  for (int a = 0; a < m; ++a) {
    for (int k = 0; k < kContinuity; ++k) {
      target(k) = left.z(k * m + a) - left.dual_out(k * m + a);
      target(kContinuity + k) = right.z(k * m + a) - right.dual_in(k * m + a);
    }
    Eigen::Matrix<double, kNumCoeffs, 1> rhs = f.boundary.transpose() * target;
    if (cfg_.samples > 0) rhs += f.sample_basis.transpose() * (ctx.w.col(a) - ctx.u.col(a));
    rhs *= cfg_.rho;
    coeffs.row(a) = (d.asDiagonal() * f.llt.solve(rhs)).transpose();
  }
  return Segmentd(std::move(coeffs), ctx.segment.duration);
}

void ConsensusAdmm::run_local_updates() {
  const int n = num_segments();
  std::vector<Segmentd> next(static_cast<std::size_t>(n));
  auto body = [&](int i) { next[static_cast<std::size_t>(i)] = local_update(i); };
  if (pool_ && n > 1) {
    pool_->arena.execute([&] {
      tbb::parallel_for(tbb::blocked_range<int>(0, n), [&](const tbb::blocked_range<int>& r) {
        for (int i = r.begin(); i != r.end(); ++i) body(i);
      });
    });
  } else {
    for (int i = 0; i < n; ++i) body(i);
  }
  for (int i = 0; i < n; ++i) {
    segments_[static_cast<std::size_t>(i)].segment = std::move(next[static_cast<std::size_t>(i)]);
  }
}

void ConsensusAdmm::consensus_and_dual_update() {
  const int n = num_segments();
  std::vector<BoundaryStated> starts(static_cast<std::size_t>(n)), ends(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    starts[static_cast<std::size_t>(i)] = left_state(i);
    ends[static_cast<std::size_t>(i)] = right_state(i);
  }
  for (int j = 0; j <= n; ++j) {
    InterfaceVar& f = interfaces_[static_cast<std::size_t>(j)];
    f.z_prev = f.z;
    if (!f.fixed && j > 0 && j < n) {
      f.z = 0.5 * ((ends[static_cast<std::size_t>(j - 1)] + f.dual_in) +
                   (starts[static_cast<std::size_t>(j)] + f.dual_out));
    }
    if (j > 0) f.dual_in += ends[static_cast<std::size_t>(j - 1)] - f.z;
    if (j < n) f.dual_out += starts[static_cast<std::size_t>(j)] - f.z;
  }
  if (cfg_.samples == 0) return;
  for (int i = 0; i < n; ++i) {
    SegmentCtx& ctx = segments_[static_cast<std::size_t>(i)];
    const Factor& f = factors_[static_cast<std::size_t>(i)];
    const auto d = time_scaling(ctx.segment.duration);
    // Phi * c expressed through the scaled basis: Phi_hat * D^-1 * c.
    const Eigen::MatrixXd sampled =
        f.sample_basis * (d.cwiseInverse().asDiagonal() * ctx.segment.coeffs.transpose());
    ctx.w_prev = ctx.w;
    ctx.w = (sampled + ctx.u).cwiseMax(ctx.lo).cwiseMin(ctx.hi);
    ctx.u += sampled - ctx.w;
  }
}

SolverStatus ConsensusAdmm::compute_residuals() {
  const int n = num_segments();
  const double rho = cfg_.rho;
  double primal_sq = 0.0, dual_sq = 0.0, ax_sq = 0.0, z_sq = 0.0, y_sq = 0.0;
  double p_dim = 0.0, n_dim = 0.0;
  double max_eps = 0.0, sum_eps = 0.0;
  for (int i = 0; i < n; ++i) {
    SegmentCtx& ctx = segments_[static_cast<std::size_t>(i)];
    const InterfaceVar& left = interfaces_[static_cast<std::size_t>(i)];
    const InterfaceVar& right = interfaces_[static_cast<std::size_t>(i + 1)];
    const BoundaryStated bl = left_state(i);
    const BoundaryStated br = right_state(i);
    const double rl = (bl - left.z).squaredNorm();
    const double rr = (br - right.z).squaredNorm();
    const double dl = rho * rho * (left.z - left.z_prev).squaredNorm();
    const double dr = rho * rho * (right.z - right.z_prev).squaredNorm();
    ctx.eps_left = rl + dl;
    ctx.eps_right = rr + dr;
    ctx.eps = ctx.eps_left + ctx.eps_right;
    primal_sq += rl + rr;
    dual_sq += dl + dr;
    ax_sq += bl.squaredNorm() + br.squaredNorm();
    z_sq += left.z.squaredNorm() + right.z.squaredNorm();
    y_sq += rho * rho * (left.dual_out.squaredNorm() + right.dual_in.squaredNorm());
    p_dim += 2.0 * static_cast<double>(bl.size());
    n_dim += static_cast<double>(kNumCoeffs * axes_);
    if (cfg_.samples > 0) {
      const auto& f = factors_[static_cast<std::size_t>(i)];
      const auto d = time_scaling(ctx.segment.duration);
      const Eigen::MatrixXd sampled =
          f.sample_basis * (d.cwiseInverse().asDiagonal() * ctx.segment.coeffs.transpose());
      ctx.constraint_residual = (sampled - ctx.w).squaredNorm();
      primal_sq += ctx.constraint_residual;
      dual_sq += rho * rho * (ctx.w - ctx.w_prev).squaredNorm();
      ax_sq += sampled.squaredNorm();
      z_sq += ctx.w.squaredNorm();
      y_sq += rho * rho * ctx.u.squaredNorm();
      p_dim += static_cast<double>(sampled.size());
    }
    ctx.history.push_back(log_floor(ctx.eps));
    while (static_cast<int>(ctx.history.size()) > cfg_.history) ctx.history.pop_front();
    max_eps = std::max(max_eps, ctx.eps);
    sum_eps += ctx.eps;
  }
  status_.max_residual = max_eps;
  status_.mean_residual = sum_eps / static_cast<double>(n);
  status_.primal_norm = std::sqrt(primal_sq);
  status_.dual_norm = std::sqrt(dual_sq);
  status_.eps_primal = std::sqrt(p_dim) * cfg_.eps_abs + cfg_.eps_rel * std::sqrt(std::max(ax_sq, z_sq));
  status_.eps_dual = std::sqrt(n_dim) * cfg_.eps_abs + cfg_.eps_rel * std::sqrt(y_sq);
  residuals_ready_ = true;
  return status_;
}

SolverStatus ConsensusAdmm::check_converged() {
  if (status_.converged || status_.failed) return status_;
  if (residuals_ready_ && status_.primal_norm <= status_.eps_primal &&
      status_.dual_norm <= status_.eps_dual) {
    status_.converged = true;
  } else if (status_.iterations >= cfg_.max_iter) {
    status_.failed = true;
  }
  return status_;
}

SolverStatus ConsensusAdmm::iterate_block(int k) {
  for (int step = 0; step < k && !status_.done(); ++step) {
    run_local_updates();
    consensus_and_dual_update();
    compute_residuals();
    ++status_.iterations;
    check_converged();
  }
  return status_;
}

void ConsensusAdmm::split_segment(int i, double t_split, double time_ratio, double inflation) {
  if (i < 0 || i >= num_segments()) throw std::out_of_range("split index out of range");
  if (!(time_ratio >= 0.1 && time_ratio <= 0.9)) throw std::invalid_argument("time ratio outside [0.1, 0.9]");
  if (!(inflation >= 0.0 && inflation <= 0.3)) throw std::invalid_argument("inflation outside [0, 0.3]");
  const auto idx = static_cast<std::size_t>(i);
  const Segmentd parent = segments_[idx].segment;
  const double duration = parent.duration;
  if (!(t_split > 0.0 && t_split < duration)) {
    throw SplitError("split time must lie strictly inside the segment");
  }
  t_split = std::clamp(t_split, 0.05 * duration, 0.95 * duration);

  const int m = axes_;
  const double dilation = 1.0 + inflation;
  InterfaceVar mid;
  mid.z = state_at(parent, t_split);
  mid.z.segment(m, m) /= dilation;
  mid.z.segment(2 * m, m) /= dilation * dilation;
  mid.z_prev = mid.z;
  mid.dual_in = BoundaryStated::Zero(m * kContinuity);
  mid.dual_out = BoundaryStated::Zero(m * kContinuity);
  mid.fixed = false;

  const double t_left = time_ratio * duration * dilation;
  const double t_right = (1.0 - time_ratio) * duration * dilation;
  Segmentd left = fit_boundary(interfaces_[idx].z, mid.z, t_left).segment;
  Segmentd right = fit_boundary(mid.z, interfaces_[idx + 1].z, t_right).segment;

  const AxisBox region = segments_[idx].region;
  interfaces_.insert(interfaces_.begin() + i + 1, std::move(mid));

  SegmentCtx left_ctx;
  left_ctx.segment = std::move(left);
  left_ctx.region = region;
  prepare(left_ctx);
  SegmentCtx right_ctx;
  right_ctx.segment = std::move(right);
  right_ctx.region = region;
  prepare(right_ctx);

  segments_[idx] = std::move(left_ctx);
  segments_.insert(segments_.begin() + i + 1, std::move(right_ctx));
  factors_.insert(factors_.begin() + i + 1, Factor{});
  refresh_factor(i);
  refresh_factor(i + 1);
}

Trajectoryd ConsensusAdmm::trajectory() const {
  Trajectoryd traj;
  traj.segments.reserve(segments_.size());
  for (const auto& ctx : segments_) traj.segments.push_back(ctx.segment);
  traj.consistent = status_.converged;
  return traj;
}

double ConsensusAdmm::jerk_energy() const {
  double sum = 0.0;
  for (const auto& ctx : segments_) sum += atrs::jerk_energy(ctx.segment);
  return sum;
}

double ConsensusAdmm::dual_norm(int i) const {
  const auto idx = static_cast<std::size_t>(i);
  return cfg_.rho * std::sqrt(interfaces_.at(idx).dual_out.squaredNorm() +
                              interfaces_.at(idx + 1).dual_in.squaredNorm());
}

double ConsensusAdmm::max_violation(int per_segment) const {
  if (cfg_.samples == 0) return 0.0;
  double worst = 0.0;
  for (const auto& ctx : segments_) {
    for (int k = 0; k <= per_segment; ++k) {
      const double t = ctx.segment.duration * double(k) / double(per_segment);
      const Eigen::VectorXd p = evaluate(ctx.segment, t, 0);
      const Eigen::VectorXd v = evaluate(ctx.segment, t, 1);
      const Eigen::VectorXd a = evaluate(ctx.segment, t, 2);
      worst = std::max(worst, (ctx.region.lo - p).maxCoeff());
      worst = std::max(worst, (p - ctx.region.hi).maxCoeff());
      worst = std::max(worst, v.cwiseAbs().maxCoeff() - cfg_.v_max);
      worst = std::max(worst, a.cwiseAbs().maxCoeff() - cfg_.a_max);
    }
  }
  return worst;
}

}  // namespace atrs
