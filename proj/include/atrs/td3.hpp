// Shared actor, twin critics and the TD3 update used to train the split policy.

#ifndef ATRS_TD3_HPP_
#define ATRS_TD3_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "atrs/env.hpp"
#include "atrs/errors.hpp"
#include "atrs/nn.hpp"

namespace atrs {

/// Observations B x 11 -> actions B x 4 in (-1, 1), one tanh head per component.
class Actor {
 public:
  explicit Actor(int hidden = 256);

  void init(std::mt19937_64& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& obs);
  /// Gradient w.r.t. the forward output; returns the gradient w.r.t. obs (B x 11).
  Eigen::MatrixXd backward(const Eigen::MatrixXd& d_actions);
  std::vector<nn::ParamRef> params();
  int hidden() const { return hidden_; }

  nn::Trunk trunk;
  std::array<nn::Linear, kActDim> heads;

 private:
  int hidden_;
  nn::Tanh squash_;
};

/// (obs B x 11, actions B x 4) -> values B x 1.
class Critic {
 public:
  explicit Critic(int hidden = 256);

  void init(std::mt19937_64& rng);
  Eigen::VectorXd forward(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions);
  /// Returns the gradient w.r.t. the concatenated input, B x 15.
  Eigen::MatrixXd backward(const Eigen::VectorXd& d_values);
  std::vector<nn::ParamRef> params();
  int hidden() const { return hidden_; }

  nn::Trunk trunk;
  nn::Linear head;

 private:
  int hidden_;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 40000);

  void push(const Transition& t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// Oldest stored transition first.
  const Transition& at(std::size_t k) const;
  /// Uniform with replacement.
  std::vector<Transition> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot of the oldest entry once full
  std::vector<Transition> items_;
};

struct Td3Config {
  int hidden = 256;
  double lr_actor = 4e-4;
  double lr_critic = 4e-3;
  double gamma = 0.99;
  double tau = 0.005;
  int policy_delay = 4;
  double target_noise = 0.2;
  double noise_clip = 0.5;
  int batch_size = 512;
  std::size_t buffer_capacity = 40000;
  double sigma_start = 0.1;
  double sigma_end = 0.01;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Exponential interpolation sigma_start -> sigma_end over the episode budget.
double exploration_sigma(const Td3Config& cfg, long episode, long total_episodes);

struct UpdateStats {
  double critic_loss = 0.0;
  std::optional<double> actor_loss;
};

struct Batch {
  Eigen::MatrixXd obs, actions, next_obs;
  Eigen::VectorXd rewards, terminal;
};

Batch make_batch(const std::vector<Transition>& items);

class Td3Trainer {
 public:
  explicit Td3Trainer(Td3Config cfg);

  /// Deterministic policy output.
  Eigen::MatrixXd act(const Eigen::MatrixXd& obs);

  /// Bootstrap targets r + gamma (1 - done) min(Q1', Q2') with smoothed target actions.
  Eigen::VectorXd targets(const Batch& batch);

  UpdateStats update(const Batch& batch);

  const Td3Config& config() const { return cfg_; }
  long updates() const { return updates_; }
  std::mt19937_64& rng() { return rng_; }

  Actor actor, actor_target;
  Critic q1, q2, q1_target, q2_target;
  nn::Adam actor_opt, q1_opt, q2_opt;

  /// Every tensor in checkpoint order.
  std::vector<nn::ParamRef> state_tensors();

 private:
  friend void load_checkpoint(Td3Trainer& trainer, const std::string& path);
  friend Td3Trainer load_checkpoint(const std::string& path);

  Td3Config cfg_;
  long updates_ = 0;
  std::mt19937_64 rng_;
};

class CheckpointError : public FormatError {
 public:
  enum class Kind { kMagic, kVersion, kShape, kTruncated, kIo };
  CheckpointError(Kind kind, const std::string& what) : FormatError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr char kCheckpointMagic[8] = {'A', 'T', 'R', 'S', 'T', 'D', '3', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(Td3Trainer& trainer, const std::string& path);
/// Loads into an existing trainer whose architecture must match the file.
void load_checkpoint(Td3Trainer& trainer, const std::string& path);
/// Builds a trainer with the architecture recorded in the file.
Td3Trainer load_checkpoint(const std::string& path);

}  // namespace atrs

#endif  // ATRS_TD3_HPP_
