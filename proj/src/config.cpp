#include "atrs/config.hpp"

#include <array>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "atrs/errors.hpp"

namespace atrs {

namespace {

using json = nlohmann::ordered_json;

// Reads optional keys from one JSON object and rejects anything unexpected.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key " + where_ + "." + key);
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad value for " + where_ + "." + key);
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_solver(const json& j, SolverConfig& c) {
  Reader r(j, "solver");
  r.get("rho", c.rho);
  r.get("eps_abs", c.eps_abs);
  r.get("eps_rel", c.eps_rel);
  r.get("max_iter", c.max_iter);
  r.get("k_dec", c.k_dec);
  r.get("constraint_samples", c.samples);
  r.get("residual_history", c.history);
  r.get("threads", c.threads);
}

void read_reward(const json& j, RewardConfig& c) {
  Reader r(j, "reward");
  r.get("lambda", c.lambda);
  r.get("r_conv", c.r_conv);
  r.get("r_fail", c.r_fail);
  r.get("guidance_fraction", c.guidance_fraction);
  r.get("n_max_factor", c.n_max_factor);
  r.get("gate_threshold", c.gate_threshold);
}

void read_td3(const json& j, Td3Config& c) {
  Reader r(j, "td3");
  r.get("actor_lr", c.lr_actor);
  r.get("critic_lr", c.lr_critic);
  r.get("discount", c.gamma);
  r.get("soft_update", c.tau);
  r.get("policy_delay", c.policy_delay);
  r.get("target_policy_noise", c.target_noise);
  r.get("target_noise_clip", c.noise_clip);
  r.get("batch_size", c.batch_size);
  r.get("buffer_capacity", c.buffer_capacity);
  r.get("hidden_dim", c.hidden);
  std::array<double, 2> noise{c.sigma_start, c.sigma_end};
  r.get("exploration_noise", noise);
  c.sigma_start = noise[0];
  c.sigma_end = noise[1];
}

void read_generator(const json& j, GeneratorConfig& c) {
  Reader r(j, "generator");
  std::array<int, 2> dims{c.grid.nx, c.grid.ny};
  r.get("grid_dims", dims);
  c.grid.nx = dims[0];
  c.grid.ny = dims[1];
  r.get("cell_size", c.grid.cell_size);
  r.get("v_max", c.v_max);
  r.get("a_max", c.a_max);
  r.get("speed_fraction", c.speed_fraction);
  r.get("max_inflation", c.max_inflation);
  r.get("attempts", c.attempts);
}

void read_train(const json& j, TrainConfig& c) {
  Reader r(j, "train");
  r.get("episodes", c.episodes);
  r.get("envs", c.envs);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("density", c.density);
  r.get("scale", c.scale);
  r.get("pool_size", c.pool_size);
  r.get("pool_seed", c.pool_seed);
  r.get("split_exploration", c.split_exploration);
}

void read_eval(const json& j, EvalConfig& c) {
  Reader r(j, "eval");
  r.get("trials", c.trials);
  r.get("seed", c.seed);
  r.get("density", c.density);
  r.get("scale", c.scale);
}

}  // namespace

void RunConfig::validate() const {
  solver.validate();
  reward.validate();
  td3.validate();
  if (generator.grid.nx < 8 || generator.grid.ny < 8 || !(generator.grid.cell_size > 0.0)) {
    throw ConfigError("generator grid too small");
  }
  if (!(generator.v_max > 0.0) || !(generator.a_max > 0.0)) throw ConfigError("generator limits must be positive");
  if (!(generator.speed_fraction > 0.0 && generator.speed_fraction <= 1.0)) {
    throw ConfigError("speed fraction outside (0, 1]");
  }
  if (generator.max_inflation < 0 || generator.attempts < 1) throw ConfigError("bad generator search limits");
  if (train.episodes < 1 || train.envs < 1 || train.pool_size < 1 || train.checkpoint_every < 0) {
    throw ConfigError("bad training budget");
  }
  if (!(train.split_exploration >= 0.0 && train.split_exploration <= 1.0)) {
    throw ConfigError("split exploration outside [0, 1]");
  }
  if (eval.trials < 1) throw ConfigError("trial count must be positive");
  density_of(train.density);
  density_of(eval.density);
  parse_scale(train.scale);
  parse_scale(eval.scale);
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  {
    Reader r(j, "config");
    r.get("seed", cfg.seed);
    if (const json* c = r.child("solver")) read_solver(*c, cfg.solver);
    if (const json* c = r.child("reward")) read_reward(*c, cfg.reward);
    if (const json* c = r.child("td3")) read_td3(*c, cfg.td3);
    if (const json* c = r.child("generator")) read_generator(*c, cfg.generator);
    if (const json* c = r.child("train")) read_train(*c, cfg.train);
    if (const json* c = r.child("eval")) read_eval(*c, cfg.eval);
  }
  cfg.td3.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["solver"] = {{"rho", cfg.solver.rho},
                 {"eps_abs", cfg.solver.eps_abs},
                 {"eps_rel", cfg.solver.eps_rel},
                 {"max_iter", cfg.solver.max_iter},
                 {"k_dec", cfg.solver.k_dec},
                 {"constraint_samples", cfg.solver.samples},
                 {"residual_history", cfg.solver.history},
                 {"threads", cfg.solver.threads}};
  j["reward"] = {{"lambda", cfg.reward.lambda},
                 {"r_conv", cfg.reward.r_conv},
                 {"r_fail", cfg.reward.r_fail},
                 {"guidance_fraction", cfg.reward.guidance_fraction},
                 {"n_max_factor", cfg.reward.n_max_factor},
                 {"gate_threshold", cfg.reward.gate_threshold}};
  j["td3"] = {{"actor_lr", cfg.td3.lr_actor},
              {"critic_lr", cfg.td3.lr_critic},
              {"discount", cfg.td3.gamma},
              {"soft_update", cfg.td3.tau},
              {"policy_delay", cfg.td3.policy_delay},
              {"target_policy_noise", cfg.td3.target_noise},
              {"target_noise_clip", cfg.td3.noise_clip},
              {"batch_size", cfg.td3.batch_size},
              {"buffer_capacity", cfg.td3.buffer_capacity},
              {"hidden_dim", cfg.td3.hidden},
              {"exploration_noise", {cfg.td3.sigma_start, cfg.td3.sigma_end}}};
  j["generator"] = {{"grid_dims", {cfg.generator.grid.nx, cfg.generator.grid.ny}},
                    {"cell_size", cfg.generator.grid.cell_size},
                    {"v_max", cfg.generator.v_max},
                    {"a_max", cfg.generator.a_max},
                    {"speed_fraction", cfg.generator.speed_fraction},
                    {"max_inflation", cfg.generator.max_inflation},
                    {"attempts", cfg.generator.attempts}};
  j["train"] = {{"episodes", cfg.train.episodes},
                {"envs", cfg.train.envs},
                {"checkpoint_every", cfg.train.checkpoint_every},
                {"density", cfg.train.density},
                {"scale", cfg.train.scale},
                {"pool_size", cfg.train.pool_size},
                {"pool_seed", cfg.train.pool_seed},
                {"split_exploration", cfg.train.split_exploration}};
  j["eval"] = {{"trials", cfg.eval.trials},
               {"seed", cfg.eval.seed},
               {"density", cfg.eval.density},
               {"scale", cfg.eval.scale}};
  return j.dump(2) + "\n";
}

}  // namespace atrs
