// Benchmark instance generation: correlated-noise occupancy grids, A* front
// end with box-visibility pruning, face-inflated corridors, trapezoidal time
// allocation and the versioned JSON instance format.

#ifndef ATRS_PROBLEM_HPP_
#define ATRS_PROBLEM_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "atrs/admm.hpp"

namespace atrs {

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct OccupancyGrid {
  int nx = 0;
  int ny = 0;
  double cell_size = 0.25;
  std::uint64_t seed = 0;
  double target_density = 0.0;
  std::vector<std::uint8_t> occupied;  // row-major, y * nx + x

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < nx && c.y < ny; }
  bool blocked(Cell c) const { return occupied[static_cast<std::size_t>(c.y * nx + c.x)] != 0; }
  bool free(Cell c) const { return in_bounds(c) && !blocked(c); }
  double density() const;
  Eigen::Vector2d center(Cell c) const { return {(c.x + 0.5) * cell_size, (c.y + 0.5) * cell_size}; }
};

/// Inclusive cell rectangle [x0, x1] x [y0, y1].
struct CellBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  AxisBox to_metric(double cell_size) const;
};

/// Counts occupied cells over arbitrary rectangles in O(1).
class OccupancyIntegral {
 public:
  explicit OccupancyIntegral(const OccupancyGrid& grid);
  long count(const CellBox& box) const;
  bool box_free(const CellBox& box) const { return count(box) == 0; }

 private:
  int nx_ = 0;
  std::vector<long> sums_;  // (nx + 1) x (ny + 1)
};

enum class ScaleClass { kShort, kMedium, kLong };

ScaleClass parse_scale(const std::string& name);
std::string to_string(ScaleClass scale);
double density_of(const std::string& name);  // sparse | medium | dense

struct GridSpec {
  int nx = 192;
  int ny = 192;
  double cell_size = 0.25;
};

/// Three-octave lattice gradient noise thresholded at the exact order
/// statistic that makes the occupied fraction equal to `density`.
OccupancyGrid generate_grid(std::uint64_t seed, double density, const GridSpec& spec = {});

/// 8-connected A* (octile heuristic, no corner cutting) followed by greedy
/// pruning that keeps consecutive waypoints whose bounding box is obstacle free.
std::vector<Cell> plan_path(const OccupancyGrid& grid, Cell start, Cell goal);

/// Raw A* cell path before pruning.
std::vector<Cell> astar(const OccupancyGrid& grid, Cell start, Cell goal);

/// One box per consecutive waypoint pair, each face inflated cell by cell
/// until blocked, up to `max_inflation` cells.
std::vector<CellBox> build_corridor(const OccupancyGrid& grid, const std::vector<Cell>& waypoints,
                                    int max_inflation = 5);

struct ProblemInstance {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::uint64_t seed = 0;
  double rho = 0.0;
  GridSpec grid;
  BoundaryStated start;
  BoundaryStated goal;
  Eigen::MatrixXd waypoints;  // m x (N + 1)
  std::vector<AxisBox> boxes;
  std::vector<double> durations;
  double v_max = 3.0;
  double a_max = 6.0;
  std::optional<int> k_base;

  int num_segments() const { return static_cast<int>(durations.size()); }
  double path_length() const;
  Eigen::VectorXd origin() const { return waypoints.col(0); }
};

struct GeneratorConfig {
  GridSpec grid;
  double v_max = 3.0;
  double a_max = 6.0;
  double speed_fraction = 0.6;
  int max_inflation = 5;
  int attempts = 100;
};

/// Solver configuration with the instance's dynamic limits filled in.
SolverConfig solver_config_for(const ProblemInstance& inst, SolverConfig base = {});
/// The solver works in a frame anchored at origin(); add it back to map
/// trajectory positions to workspace coordinates.
ConsensusAdmm make_solver(const ProblemInstance& inst, const SolverConfig& cfg);

/// Trapezoidal rest-to-rest time allocation along the waypoint polyline.
std::vector<double> allocate_durations(const Eigen::MatrixXd& waypoints, double v, double a);

/// Iterations of the fixed-structure solver, or max_iter when it fails.
int baseline_iterations(const ProblemInstance& inst, const SolverConfig& cfg);

ProblemInstance make_instance(std::uint64_t seed, double density, ScaleClass scale,
                              const GeneratorConfig& gen = {}, const SolverConfig& solver = {});

std::string to_json(const ProblemInstance& inst);
ProblemInstance from_json(const std::string& text);
void save_instance(const ProblemInstance& inst, const std::string& path);
ProblemInstance load_instance(const std::string& path);

}  // namespace atrs

#endif  // ATRS_PROBLEM_HPP_
