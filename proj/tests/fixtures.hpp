// Random solver fixtures shared by the unit and acceptance suites.

#ifndef ATRS_TESTS_FIXTURES_HPP_
#define ATRS_TESTS_FIXTURES_HPP_

#include <random>
#include <vector>

#include "atrs/admm.hpp"
#include "oracles.hpp"

namespace fixtures {

using namespace atrs;

struct Chain {
  Eigen::MatrixXd waypoints;
  std::vector<double> durations;
};

inline Chain random_chain(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> step(-3.0, 3.0), dur(0.5, 2.5);
  Chain c;
  c.waypoints = Eigen::MatrixXd::Zero(2, n + 1);
  for (int k = 1; k <= n; ++k) {
    c.waypoints(0, k) = c.waypoints(0, k - 1) + step(rng);
    c.waypoints(1, k) = c.waypoints(1, k - 1) + step(rng);
  }
  for (int k = 0; k < n; ++k) c.durations.push_back(dur(rng));
  return c;
}

inline SolverConfig unconstrained() {
  SolverConfig cfg;
  cfg.samples = 0;
  return cfg;
}

inline ConsensusAdmm make(const Chain& c, SolverConfig cfg) {
  return ConsensusAdmm(c.waypoints, c.durations,
                       std::vector<AxisBox>(c.durations.size(), AxisBox::unbounded(2)), cfg);
}

inline double oracle_energy(const Chain& c) {
  double total = 0.0;
  const int n = static_cast<int>(c.durations.size());
  for (int axis = 0; axis < 2; ++axis) {
    total += oracle::min_jerk_chain_energy(c.durations, Eigen::Vector3d(c.waypoints(axis, 0), 0, 0),
                                           Eigen::Vector3d(c.waypoints(axis, n), 0, 0));
  }
  return total;
}

inline ConsensusAdmm min_jerk_parents(std::mt19937_64& rng, int n) {
  const Chain c = random_chain(rng, n);
  std::vector<InterfaceVar> ifaces(static_cast<std::size_t>(n + 1));
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k <= n; ++k) {
    auto& f = ifaces[static_cast<std::size_t>(k)];
    f.z = BoundaryStated::Zero(6);
    f.z.head(2) = c.waypoints.col(k);
    if (k > 0 && k < n) {
      for (int j = 2; j < 6; ++j) f.z(j) = u(rng);
    }
    f.z_prev = f.z;
    f.dual_in = f.dual_out = BoundaryStated::Zero(6);
    f.fixed = k == 0 || k == n;
  }
  std::vector<Segmentd> segs;
  for (int k = 0; k < n; ++k) {
    segs.push_back(fit_boundary(ifaces[static_cast<std::size_t>(k)].z, ifaces[static_cast<std::size_t>(k + 1)].z,
                                c.durations[static_cast<std::size_t>(k)])
                       .segment);
  }
  return ConsensusAdmm(ifaces, segs, std::vector<AxisBox>(static_cast<std::size_t>(n), AxisBox::unbounded(2)),
                       unconstrained());
}

}  // namespace fixtures

#endif  // ATRS_TESTS_FIXTURES_HPP_
