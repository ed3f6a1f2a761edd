#include "atrs/problem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "atrs/errors.hpp"

namespace atrs {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double lattice_gradient(std::uint64_t seed, int octave, long ix, long iy, double dx, double dy) {
  std::uint64_t h = splitmix64(seed ^ (static_cast<std::uint64_t>(octave) * 0xD1B54A32D192ED03ULL));
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix) * 0x8CB92BA72F3D8DD7ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy) * 0xABC98388FB8FAC03ULL);
  const double angle = static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 * std::numbers::pi;
  return std::cos(angle) * dx + std::sin(angle) * dy;
}

double gradient_noise(std::uint64_t seed, int octave, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const long ix = static_cast<long>(fx), iy = static_cast<long>(fy);
  const double rx = x - fx, ry = y - fy;
  const double n00 = lattice_gradient(seed, octave, ix, iy, rx, ry);
  const double n10 = lattice_gradient(seed, octave, ix + 1, iy, rx - 1.0, ry);
  const double n01 = lattice_gradient(seed, octave, ix, iy + 1, rx, ry - 1.0);
  const double n11 = lattice_gradient(seed, octave, ix + 1, iy + 1, rx - 1.0, ry - 1.0);
  const double u = fade(rx), v = fade(ry);
  const double a = n00 + u * (n10 - n00);
  const double b = n01 + u * (n11 - n01);
  return a + v * (b - a);
}

constexpr double kBaseFrequency = 1.0 / 8.0;  // lattice cells per meter, first octave
constexpr int kOctaves = 3;

CellBox bounding(Cell a, Cell b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x), std::max(a.y, b.y)};
}

double trapezoid_time(double s, double length, double v, double a) {
  const double v_peak = std::min(v, std::sqrt(a * length));
  const double s_acc = v_peak * v_peak / (2.0 * a);
  const double t_acc = v_peak / a;
  const double t_total = 2.0 * t_acc + (length - 2.0 * s_acc) / v_peak;
  if (s <= s_acc) return std::sqrt(2.0 * std::max(s, 0.0) / a);
  if (s >= length - s_acc) return t_total - std::sqrt(2.0 * std::max(length - s, 0.0) / a);
  return t_acc + (s - s_acc) / v_peak;
}

struct ScaleRange {
  double lo, hi;  // sampled straight-line distance, meters
  double min_len, max_len;  // accepted path length
};

ScaleRange range_of(ScaleClass scale) {
  switch (scale) {
    case ScaleClass::kShort: return {6.0, 11.0, 4.0, 12.0};
    case ScaleClass::kMedium: return {14.0, 32.0, 12.0, 36.0};
    case ScaleClass::kLong: return {38.0, 52.0, 36.0, 1e9};
  }
  return {6.0, 11.0, 4.0, 12.0};
}

nlohmann::ordered_json vec_json(const Eigen::VectorXd& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd json_vec(const nlohmann::ordered_json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

double OccupancyGrid::density() const {
  if (occupied.empty()) return 0.0;
  const auto n = std::count(occupied.begin(), occupied.end(), std::uint8_t{1});
  return static_cast<double>(n) / static_cast<double>(occupied.size());
}

AxisBox CellBox::to_metric(double cell_size) const {
  AxisBox box;
  box.lo = Eigen::Vector2d(x0 * cell_size, y0 * cell_size);
  box.hi = Eigen::Vector2d((x1 + 1) * cell_size, (y1 + 1) * cell_size);
  return box;
}

OccupancyIntegral::OccupancyIntegral(const OccupancyGrid& grid)
    : nx_(grid.nx), sums_(static_cast<std::size_t>((grid.nx + 1) * (grid.ny + 1)), 0) {
  const int w = nx_ + 1;
  for (int y = 0; y < grid.ny; ++y) {
    for (int x = 0; x < grid.nx; ++x) {
      const auto at = [&](int xx, int yy) { return sums_[static_cast<std::size_t>(yy * w + xx)]; };
      sums_[static_cast<std::size_t>((y + 1) * w + x + 1)] =
          (grid.blocked({x, y}) ? 1 : 0) + at(x, y + 1) + at(x + 1, y) - at(x, y);
    }
  }
}

long OccupancyIntegral::count(const CellBox& b) const {
  const int w = nx_ + 1;
  const auto at = [&](int xx, int yy) { return sums_[static_cast<std::size_t>(yy * w + xx)]; };
  return at(b.x1 + 1, b.y1 + 1) - at(b.x0, b.y1 + 1) - at(b.x1 + 1, b.y0) + at(b.x0, b.y0);
}

ScaleClass parse_scale(const std::string& name) {
  if (name == "short") return ScaleClass::kShort;
  if (name == "medium") return ScaleClass::kMedium;
  if (name == "long") return ScaleClass::kLong;
  throw ConfigError("unknown scale class: " + name);
}

std::string to_string(ScaleClass scale) {
  switch (scale) {
    case ScaleClass::kShort: return "short";
    case ScaleClass::kMedium: return "medium";
    case ScaleClass::kLong: return "long";
  }
  return "short";
}

double density_of(const std::string& name) {
  if (name == "sparse") return 0.2;
  if (name == "medium") return 0.3;
  if (name == "dense") return 0.4;
  throw ConfigError("unknown density level: " + name);
}

OccupancyGrid generate_grid(std::uint64_t seed, double density, const GridSpec& spec) {
  if (!(density >= 0.0 && density <= 0.6)) throw std::invalid_argument("density must lie in [0, 0.6]");
  OccupancyGrid grid;
  grid.nx = spec.nx;
  grid.ny = spec.ny;
  grid.cell_size = spec.cell_size;
  grid.seed = seed;
  grid.target_density = density;
  const std::size_t total = static_cast<std::size_t>(spec.nx) * static_cast<std::size_t>(spec.ny);
  grid.occupied.assign(total, 0);

  std::vector<double> field(total);
  for (int y = 0; y < spec.ny; ++y) {
    for (int x = 0; x < spec.nx; ++x) {
      const Eigen::Vector2d p = grid.center({x, y});
      double value = 0.0, amp = 1.0, freq = kBaseFrequency;
      for (int o = 0; o < kOctaves; ++o) {
        value += amp * gradient_noise(seed, o, p.x() * freq, p.y() * freq);
        amp *= 0.5;
        freq *= 2.0;
      }
      field[static_cast<std::size_t>(y * spec.nx + x)] = value;
    }
  }
  const auto count = static_cast<std::size_t>(std::llround(density * static_cast<double>(total)));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return field[a] != field[b] ? field[a] > field[b] : a < b;
                    });
  for (std::size_t k = 0; k < count; ++k) grid.occupied[order[k]] = 1;
  return grid;
}

std::vector<Cell> astar(const OccupancyGrid& grid, Cell start, Cell goal) {
  if (!grid.free(start) || !grid.free(goal)) throw InfeasibleError("start or goal cell is occupied");
  const int nx = grid.nx;
  const auto index = [nx](Cell c) { return c.y * nx + c.x; };
  const std::size_t total = grid.occupied.size();
  const auto octile = [&](Cell c) {
    const double dx = std::abs(c.x - goal.x), dy = std::abs(c.y - goal.y);
    return std::max(dx, dy) + (std::numbers::sqrt2 - 1.0) * std::min(dx, dy);
  };
  std::vector<double> g(total, std::numeric_limits<double>::infinity());
  std::vector<int> parent(total, -1);
  std::vector<std::uint8_t> closed(total, 0);
  using Entry = std::pair<double, int>;  // (f, cell index); ties resolve to the lower index
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  g[static_cast<std::size_t>(index(start))] = 0.0;
  open.emplace(octile(start), index(start));
  static constexpr int kMoves[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  while (!open.empty()) {
    const int cur = open.top().second;
    open.pop();
    if (closed[static_cast<std::size_t>(cur)]) continue;
    closed[static_cast<std::size_t>(cur)] = 1;
    const Cell c{cur % nx, cur / nx};
    if (c == goal) break;
    for (const auto& mv : kMoves) {
      const Cell nb{c.x + mv[0], c.y + mv[1]};
      if (!grid.free(nb)) continue;
      const bool diagonal = mv[0] != 0 && mv[1] != 0;
      if (diagonal && (!grid.free({c.x + mv[0], c.y}) || !grid.free({c.x, c.y + mv[1]}))) continue;
      const double cand = g[static_cast<std::size_t>(cur)] + (diagonal ? std::numbers::sqrt2 : 1.0);
      const auto ni = static_cast<std::size_t>(index(nb));
      if (cand < g[ni]) {
        g[ni] = cand;
        parent[ni] = cur;
        open.emplace(cand + octile(nb), index(nb));
      }
    }
  }
  if (!closed[static_cast<std::size_t>(index(goal))]) throw InfeasibleError("no path between start and goal");
  std::vector<Cell> path;
  for (int cur = index(goal); cur != -1; cur = parent[static_cast<std::size_t>(cur)]) {
    path.push_back({cur % nx, cur / nx});
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<Cell> plan_path(const OccupancyGrid& grid, Cell start, Cell goal) {
  const std::vector<Cell> path = astar(grid, start, goal);
  if (path.size() == 1) return path;
  const OccupancyIntegral integral(grid);
  std::vector<std::size_t> keep{0};
  std::size_t i = 0;
  while (i + 1 < path.size()) {
    std::size_t j = i + 1;
    while (j + 1 < path.size() && integral.box_free(bounding(path[i], path[j + 1]))) ++j;
    keep.push_back(j);
    i = j;
  }
  std::vector<Cell> out;
  for (std::size_t k : keep) out.push_back(path[k]);
  return out;
}

std::vector<CellBox> build_corridor(const OccupancyGrid& grid, const std::vector<Cell>& waypoints,
                                    int max_inflation) {
  const OccupancyIntegral integral(grid);
  std::vector<CellBox> boxes;
  for (std::size_t k = 0; k + 1 < waypoints.size(); ++k) {
    CellBox box = bounding(waypoints[k], waypoints[k + 1]);
    if (!integral.box_free(box)) throw InfeasibleError("waypoint pair bounding box is not free");
    int grown[4] = {0, 0, 0, 0};
    bool changed = true;
    while (changed) {
      changed = false;
      for (int face = 0; face < 4; ++face) {
        if (grown[face] >= max_inflation) continue;
        CellBox strip = box;
        switch (face) {
          case 0: strip.x1 = strip.x0 = box.x0 - 1; break;
          case 1: strip.x0 = strip.x1 = box.x1 + 1; break;
          case 2: strip.y1 = strip.y0 = box.y0 - 1; break;
          default: strip.y0 = strip.y1 = box.y1 + 1; break;
        }
        if (strip.x0 < 0 || strip.y0 < 0 || strip.x1 >= grid.nx || strip.y1 >= grid.ny) continue;
        if (!integral.box_free(strip)) continue;
        switch (face) {
          case 0: box.x0 -= 1; break;
          case 1: box.x1 += 1; break;
          case 2: box.y0 -= 1; break;
          default: box.y1 += 1; break;
        }
        ++grown[face];
        changed = true;
      }
    }
    boxes.push_back(box);
  }
  return boxes;
}

double ProblemInstance::path_length() const {
  double len = 0.0;
  for (Eigen::Index j = 0; j + 1 < waypoints.cols(); ++j) len += (waypoints.col(j + 1) - waypoints.col(j)).norm();
  return len;
}

SolverConfig solver_config_for(const ProblemInstance& inst, SolverConfig base) {
  base.v_max = inst.v_max;
  base.a_max = inst.a_max;
  return base;
}

ConsensusAdmm make_solver(const ProblemInstance& inst, const SolverConfig& cfg) {
  // Solve relative to the start point: the relative stopping tolerance scales
  // with position magnitudes and must not depend on where the map origin is.
  const Eigen::VectorXd origin = inst.origin();
  Eigen::MatrixXd waypoints = inst.waypoints.colwise() - origin;
  std::vector<AxisBox> boxes = inst.boxes;
  for (AxisBox& b : boxes) {
    b.lo -= origin;
    b.hi -= origin;
  }
  return ConsensusAdmm(waypoints, inst.durations, std::move(boxes), solver_config_for(inst, cfg));
}

std::vector<double> allocate_durations(const Eigen::MatrixXd& waypoints, double v, double a) {
  std::vector<double> arc{0.0};
  for (Eigen::Index j = 0; j + 1 < waypoints.cols(); ++j) {
    arc.push_back(arc.back() + (waypoints.col(j + 1) - waypoints.col(j)).norm());
  }
  const double length = arc.back();
  std::vector<double> durations;
  for (std::size_t j = 0; j + 1 < arc.size(); ++j) {
    durations.push_back(trapezoid_time(arc[j + 1], length, v, a) - trapezoid_time(arc[j], length, v, a));
  }
  return durations;
}

int baseline_iterations(const ProblemInstance& inst, const SolverConfig& cfg) {
  ConsensusAdmm solver = make_solver(inst, cfg);
  return solver.iterate_block(solver.config().max_iter).iterations;
}

ProblemInstance make_instance(std::uint64_t seed, double density, ScaleClass scale,
                              const GeneratorConfig& gen, const SolverConfig& solver) {
  const OccupancyGrid grid = generate_grid(seed, density, gen.grid);
  const OccupancyIntegral integral(grid);
  const ScaleRange range = range_of(scale);
  std::mt19937_64 rng(splitmix64(seed ^ (0x5CA1EULL + static_cast<std::uint64_t>(scale))));
  std::uniform_int_distribution<int> ux(2, grid.nx - 3), uy(2, grid.ny - 3);
  std::uniform_real_distribution<double> udist(range.lo, range.hi), uangle(0.0, 2.0 * std::numbers::pi);
  const auto roomy = [&](Cell c) {
    return c.x >= 2 && c.y >= 2 && c.x < grid.nx - 2 && c.y < grid.ny - 2 &&
           integral.box_free({c.x - 1, c.y - 1, c.x + 1, c.y + 1});
  };

  // Long separations only fit near the corners, so endpoint draws that leave
  // the map or land on obstacles do not count as attempts.
  const auto draw_endpoints = [&]() -> std::optional<std::pair<Cell, Cell>> {
    for (int draw = 0; draw < 10000; ++draw) {
      const Cell start{ux(rng), uy(rng)};
      const double dist = udist(rng), angle = uangle(rng);
      const Eigen::Vector2d target = grid.center(start) + dist * Eigen::Vector2d(std::cos(angle), std::sin(angle));
      const Cell goal{static_cast<int>(std::floor(target.x() / grid.cell_size)),
                      static_cast<int>(std::floor(target.y() / grid.cell_size))};
      if (roomy(start) && roomy(goal) && !(start == goal)) return std::pair{start, goal};
    }
    return std::nullopt;
  };

  for (int attempt = 0; attempt < gen.attempts; ++attempt) {
    const auto endpoints = draw_endpoints();
    if (!endpoints) break;
    const auto [start, goal] = *endpoints;
    std::vector<Cell> cells;
    try {
      cells = plan_path(grid, start, goal);
    } catch (const InfeasibleError&) {
      continue;
    }
    ProblemInstance inst;
    inst.seed = seed;
    inst.rho = density;
    inst.grid = gen.grid;
    inst.v_max = gen.v_max;
    inst.a_max = gen.a_max;
    inst.waypoints.resize(2, static_cast<Eigen::Index>(cells.size()));
    for (std::size_t k = 0; k < cells.size(); ++k) inst.waypoints.col(static_cast<Eigen::Index>(k)) = grid.center(cells[k]);
    const double len = inst.path_length();
    if (len < range.min_len || len > range.max_len) continue;
    for (const CellBox& b : build_corridor(grid, cells, gen.max_inflation)) inst.boxes.push_back(b.to_metric(grid.cell_size));
    inst.durations = allocate_durations(inst.waypoints, gen.speed_fraction * gen.v_max, gen.speed_fraction * gen.a_max);
    inst.start = BoundaryStated::Zero(2 * kContinuity);
    inst.start.head(2) = inst.waypoints.col(0);
    inst.goal = BoundaryStated::Zero(2 * kContinuity);
    inst.goal.head(2) = inst.waypoints.col(inst.waypoints.cols() - 1);
    inst.k_base = baseline_iterations(inst, solver);
    return inst;
  }
  throw InfeasibleError("could not sample a feasible instance after " + std::to_string(gen.attempts) + " attempts");
}

std::string to_json(const ProblemInstance& inst) {
  nlohmann::ordered_json j;
  j["version"] = inst.version;
  j["seed"] = inst.seed;
  j["rho"] = inst.rho;
  j["grid_dims"] = {inst.grid.nx, inst.grid.ny};
  j["cell_size"] = inst.grid.cell_size;
  j["start"] = vec_json(inst.start);
  j["goal"] = vec_json(inst.goal);
  auto wps = nlohmann::ordered_json::array();
  for (Eigen::Index k = 0; k < inst.waypoints.cols(); ++k) wps.push_back(vec_json(inst.waypoints.col(k)));
  j["waypoints"] = wps;
  auto boxes = nlohmann::ordered_json::array();
  for (const auto& b : inst.boxes) {
    nlohmann::ordered_json box;
    box["lo"] = vec_json(b.lo);
    box["hi"] = vec_json(b.hi);
    boxes.push_back(box);
  }
  j["boxes"] = boxes;
  j["durations"] = inst.durations;
  j["v_max"] = inst.v_max;
  j["a_max"] = inst.a_max;
  j["k_base"] = inst.k_base ? nlohmann::ordered_json(*inst.k_base) : nlohmann::ordered_json(nullptr);
  return j.dump(2) + "\n";
}

ProblemInstance from_json(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("instance: invalid JSON: ") + e.what());
  }
  try {
    ProblemInstance inst;
    inst.version = j.at("version").get<int>();
    if (inst.version != ProblemInstance::kVersion) {
      throw FormatError("instance: unsupported version " + std::to_string(inst.version));
    }
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.rho = j.at("rho").get<double>();
    inst.grid.nx = j.at("grid_dims").at(0).get<int>();
    inst.grid.ny = j.at("grid_dims").at(1).get<int>();
    inst.grid.cell_size = j.at("cell_size").get<double>();
    inst.start = json_vec(j.at("start"));
    inst.goal = json_vec(j.at("goal"));
    const auto& wps = j.at("waypoints");
    if (wps.empty()) throw FormatError("instance: no waypoints");
    const auto m = static_cast<Eigen::Index>(wps.at(0).size());
    inst.waypoints.resize(m, static_cast<Eigen::Index>(wps.size()));
    for (std::size_t k = 0; k < wps.size(); ++k) {
      if (static_cast<Eigen::Index>(wps[k].size()) != m) throw FormatError("instance: ragged waypoints");
      inst.waypoints.col(static_cast<Eigen::Index>(k)) = json_vec(wps[k]);
    }
    for (const auto& b : j.at("boxes")) inst.boxes.push_back({json_vec(b.at("lo")), json_vec(b.at("hi"))});
    inst.durations = j.at("durations").get<std::vector<double>>();
    inst.v_max = j.at("v_max").get<double>();
    inst.a_max = j.at("a_max").get<double>();
    if (!j.at("k_base").is_null()) inst.k_base = j.at("k_base").get<int>();
    if (inst.boxes.size() + 1 != wps.size() || inst.durations.size() + 1 != wps.size()) {
      throw FormatError("instance: boxes/durations must number waypoints - 1");
    }
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("instance: ") + e.what());
  }
}

void save_instance(const ProblemInstance& inst, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write instance: " + path);
  out << to_json(inst);
}

ProblemInstance load_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read instance: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace atrs
