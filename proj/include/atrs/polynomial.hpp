// Piecewise quintic flat-output trajectories: evaluation, closed-form
// minimum-jerk boundary fitting, jerk energy and arc-length parameterization.
//
// Every segment polynomial is expressed in its local time t in [0, T]:
//
//   sigma(t) = sum_j c_j t^j,   j = 0 .. 5
//
// with one coefficient row per spatial axis. Boundary states stack the
// position, velocity and acceleration blocks: [p (m), v (m), a (m)].

#ifndef ATRS_POLYNOMIAL_HPP_
#define ATRS_POLYNOMIAL_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace atrs {

/// Order of the penalized derivative (jerk).
inline constexpr int kPenaltyOrder = 3;
/// Continuity is enforced through derivative order kContinuity - 1.
inline constexpr int kContinuity = 3;
/// Coefficients per axis: degree 2d - 1 polynomial.
inline constexpr int kNumCoeffs = 2 * kContinuity;

template <typename Scalar>
using CoeffMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, kNumCoeffs>;

template <typename Scalar>
using BoundaryState = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using BasisRow = Eigen::Matrix<Scalar, 1, kNumCoeffs>;

template <typename Scalar>
using BasisSquare = Eigen::Matrix<Scalar, kNumCoeffs, kNumCoeffs>;

template <typename Scalar>
struct Segment {
  CoeffMatrix<Scalar> coeffs;  // m x 2d
  Scalar duration{1};

  Segment() = default;
  Segment(CoeffMatrix<Scalar> c, Scalar t) : coeffs(std::move(c)), duration(t) {
    if (!(duration > Scalar(0)) || !std::isfinite(static_cast<double>(duration))) {
      throw std::domain_error("segment duration must be positive and finite");
    }
  }

  static Segment zero(int axes, Scalar t) {
    return Segment(CoeffMatrix<Scalar>::Zero(axes, kNumCoeffs), t);
  }

  int axes() const { return static_cast<int>(coeffs.rows()); }
};

template <typename Scalar>
struct Trajectory {
  std::vector<Segment<Scalar>> segments;
  // False while the solver holds interface mismatches between consensus steps.
  bool consistent = true;

  int size() const { return static_cast<int>(segments.size()); }
  Scalar total_duration() const {
    Scalar sum(0);
    for (const auto& s : segments) sum += s.duration;
    return sum;
  }
};

using Segmentd = Segment<double>;
using Trajectoryd = Trajectory<double>;
using BoundaryStated = BoundaryState<double>;

/// Row vector b such that b * c equals the order-th derivative at t.
template <typename Scalar>
BasisRow<Scalar> basis_row(Scalar t, int order) {
  BasisRow<Scalar> row = BasisRow<Scalar>::Zero();
  for (int j = order; j < kNumCoeffs; ++j) {
    Scalar falling(1);
    for (int k = 0; k < order; ++k) falling *= Scalar(j - k);
    row(j) = falling * std::pow(t, Scalar(j - order));
  }
  return row;
}

/// Maps coefficients to [p(0) v(0) a(0) p(T) v(T) a(T)] for a single axis.
template <typename Scalar>
BasisSquare<Scalar> boundary_matrix(Scalar duration) {
  BasisSquare<Scalar> a;
  for (int k = 0; k < kContinuity; ++k) {
    a.row(k) = basis_row<Scalar>(Scalar(0), k);
    a.row(kContinuity + k) = basis_row<Scalar>(duration, k);
  }
  return a;
}

/// Gram matrix of the jerk operator: c^T Q c = int_0^T (c'''(t))^2 dt.
template <typename Scalar>
BasisSquare<Scalar> jerk_gram(Scalar duration) {
  BasisSquare<Scalar> q = BasisSquare<Scalar>::Zero();
  for (int i = kPenaltyOrder; i < kNumCoeffs; ++i) {
    for (int j = kPenaltyOrder; j < kNumCoeffs; ++j) {
      Scalar fi(1), fj(1);
      for (int k = 0; k < kPenaltyOrder; ++k) {
        fi *= Scalar(i - k);
        fj *= Scalar(j - k);
      }
      const int power = i + j - 2 * kPenaltyOrder + 1;
      q(i, j) = fi * fj * std::pow(duration, Scalar(power)) / Scalar(power);
    }
  }
  return q;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> evaluate(const Segment<Scalar>& seg, Scalar t,
                                                  int order) {
  const Scalar slack = Scalar(1e-12) * std::max(Scalar(1), seg.duration);
  if (!(t >= -slack) || !(t <= seg.duration + slack)) {
    throw std::domain_error("evaluation time outside segment");
  }
  if (order >= kNumCoeffs) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(seg.axes());
  t = std::clamp(t, Scalar(0), seg.duration);
  return seg.coeffs * basis_row(t, order).transpose();
}

/// Stacked [p, v, a] at local time t.
template <typename Scalar>
BoundaryState<Scalar> state_at(const Segment<Scalar>& seg, Scalar t) {
  const int m = seg.axes();
  BoundaryState<Scalar> out(m * kContinuity);
  for (int k = 0; k < kContinuity; ++k) out.segment(k * m, m) = evaluate(seg, t, k);
  return out;
}

template <typename Scalar>
struct BoundaryFit {
  Segment<Scalar> segment;
  Scalar rcond{1};  // reciprocal condition estimate of the unscaled boundary system

  bool ill_conditioned() const { return rcond < Scalar(1e-13); }
};

/// Minimum-jerk quintic matching both boundary states through acceleration.
///
/// The system is solved in normalized time s = t / T, where the boundary matrix
/// is a fixed well-conditioned 6x6, and mapped back by c_j = c_hat_j / T^j.
template <typename Scalar>
BoundaryFit<Scalar> fit_boundary(const BoundaryState<Scalar>& left,
                                 const BoundaryState<Scalar>& right, Scalar duration) {
  if (!(duration > Scalar(0))) throw std::domain_error("fit duration must be positive");
  if (left.size() != right.size() || left.size() % kContinuity != 0) {
    throw std::invalid_argument("boundary states must have equal length m*d");
  }
  const int m = static_cast<int>(left.size()) / kContinuity;
  static const Eigen::PartialPivLU<BasisSquare<Scalar>> unit_lu(boundary_matrix<Scalar>(1));

  CoeffMatrix<Scalar> coeffs(m, kNumCoeffs);
  Eigen::Matrix<Scalar, kNumCoeffs, 1> rhs;
  for (int axis = 0; axis < m; ++axis) {
    Scalar scale(1);
    for (int k = 0; k < kContinuity; ++k) {
      rhs(k) = left(k * m + axis) * scale;
      rhs(kContinuity + k) = right(k * m + axis) * scale;
      scale *= duration;
    }
    Eigen::Matrix<Scalar, kNumCoeffs, 1> c = unit_lu.solve(rhs);
    Scalar inv(1);
    for (int j = 0; j < kNumCoeffs; ++j) {
      c(j) *= inv;
      inv /= duration;
    }
    coeffs.row(axis) = c.transpose();
  }
  BoundaryFit<Scalar> fit{Segment<Scalar>(std::move(coeffs), duration), Scalar(1)};
  fit.rcond = Eigen::PartialPivLU<BasisSquare<Scalar>>(boundary_matrix(duration)).rcond();
  return fit;
}

/// int_0^T ||sigma'''(t)||^2 dt, summed over axes (unit weight matrix).
template <typename Scalar>
Scalar jerk_energy(const Segment<Scalar>& seg) {
  const BasisSquare<Scalar> q = jerk_gram(seg.duration);
  Scalar sum(0);
  for (int axis = 0; axis < seg.axes(); ++axis) {
    const auto c = seg.coeffs.row(axis);
    sum += c * q * c.transpose();
  }
  return std::max(sum, Scalar(0));
}

template <typename Scalar>
Scalar jerk_energy(const Trajectory<Scalar>& traj) {
  Scalar sum(0);
  for (const auto& s : traj.segments) sum += jerk_energy(s);
  return sum;
}

inline constexpr int kArcSamples = 64;

/// Local time at which the chord-approximated arc length reaches `fraction` of
/// the total (64 uniform intervals, linear interpolation in between).
template <typename Scalar>
Scalar arc_time(const Segment<Scalar>& seg, Scalar fraction) {
  if (!(fraction >= Scalar(0) && fraction <= Scalar(1))) {
    throw std::domain_error("arc fraction must lie in [0, 1]");
  }
  const Scalar dt = seg.duration / Scalar(kArcSamples);
  std::array<Scalar, kArcSamples + 1> cumulative{};
  auto prev = evaluate(seg, Scalar(0), 0);
  for (int k = 1; k <= kArcSamples; ++k) {
    const Scalar t = (k == kArcSamples) ? seg.duration : dt * Scalar(k);
    auto cur = evaluate(seg, t, 0);
    cumulative[k] = cumulative[k - 1] + (cur - prev).norm();
    prev = std::move(cur);
  }
  const Scalar total = cumulative.back();
  if (!(total > std::numeric_limits<Scalar>::epsilon() * Scalar(16))) {
    return fraction * seg.duration;
  }
  if (fraction >= Scalar(1)) return seg.duration;
  const Scalar target = fraction * total;
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  const int hi = std::clamp(static_cast<int>(it - cumulative.begin()), 1, kArcSamples);
  const int lo = hi - 1;
  const Scalar span = cumulative[hi] - cumulative[lo];
  const Scalar w = span > Scalar(0) ? (target - cumulative[lo]) / span : Scalar(0);
  return std::min(seg.duration, dt * (Scalar(lo) + w));
}

}  // namespace atrs

#endif  // ATRS_POLYNOMIAL_HPP_
