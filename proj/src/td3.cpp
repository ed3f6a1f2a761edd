#include "atrs/td3.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace atrs {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " contains non-finite values");
}

}  // namespace

Actor::Actor(int hidden) : trunk(kObsDim, hidden), hidden_(hidden) {
  for (auto& h : heads) h = nn::Linear(hidden, 1);
}

void Actor::init(std::mt19937_64& rng) {
  trunk.init(rng);
  for (auto& h : heads) h.init_uniform(rng);
}

Eigen::MatrixXd Actor::forward(const Eigen::MatrixXd& obs) {
  if (obs.cols() != kObsDim) throw std::invalid_argument("actor expects 11 observation columns");
  require_finite(obs, "actor input");
  const nn::Mat h = trunk.forward(obs.transpose());
  nn::Mat z(kActDim, h.cols());
  for (int k = 0; k < kActDim; ++k) z.row(k) = heads[static_cast<std::size_t>(k)].forward(h);
  return squash_.forward(z).transpose();
}

Eigen::MatrixXd Actor::backward(const Eigen::MatrixXd& d_actions) {
  const nn::Mat dz = squash_.backward(d_actions.transpose());
  nn::Mat dh = heads[0].backward(dz.row(0));
  for (int k = 1; k < kActDim; ++k) dh += heads[static_cast<std::size_t>(k)].backward(dz.row(k));
  return trunk.backward(dh).transpose();
}

std::vector<nn::ParamRef> Actor::params() {
  std::vector<nn::ParamRef> out;
  trunk.params("trunk", out);
  for (int k = 0; k < kActDim; ++k) heads[static_cast<std::size_t>(k)].params("head" + std::to_string(k), out);
  return out;
}

Critic::Critic(int hidden) : trunk(kObsDim + kActDim, hidden), head(hidden, 1), hidden_(hidden) {}

void Critic::init(std::mt19937_64& rng) {
  trunk.init(rng);
  head.init_uniform(rng);
}

Eigen::VectorXd Critic::forward(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) {
  if (obs.cols() != kObsDim || actions.cols() != kActDim || obs.rows() != actions.rows()) {
    throw std::invalid_argument("critic expects B x 11 observations and B x 4 actions");
  }
  require_finite(obs, "critic observation");
  require_finite(actions, "critic action");
  const nn::Mat x = nn::concat_rows(obs.transpose(), actions.transpose());
  return head.forward(trunk.forward(x)).transpose();
}

Eigen::MatrixXd Critic::backward(const Eigen::VectorXd& d_values) {
  return trunk.backward(head.backward(d_values.transpose())).transpose();
}

std::vector<nn::ParamRef> Critic::params() {
  std::vector<nn::ParamRef> out;
  trunk.params("trunk", out);
  head.params("head", out);
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (items_.size() < capacity_) {
    items_.push_back(t);
    return;
  }
  items_[head_] = t;
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t k) const {
  if (k >= items_.size()) throw std::out_of_range("replay index out of range");
  return items_[(head_ + k) % items_.size()];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (items_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(items_[pick(rng)]);
  return out;
}

void Td3Config::validate() const {
  const auto bad = [](const char* msg) { throw ConfigError(msg); };
  if (hidden <= 0) bad("hidden width must be positive");
  if (!(lr_actor > 0.0) || !(lr_critic > 0.0)) bad("learning rates must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) bad("discount outside [0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) bad("soft update rate outside (0, 1]");
  if (policy_delay <= 0) bad("policy delay must be positive");
  if (!(target_noise >= 0.0) || !(noise_clip >= 0.0)) bad("target noise settings must be nonnegative");
  if (batch_size <= 0) bad("batch size must be positive");
  if (buffer_capacity < static_cast<std::size_t>(batch_size)) bad("replay capacity below batch size");
  if (!(sigma_start > 0.0) || !(sigma_end > 0.0)) bad("exploration noise levels must be positive");
}

double exploration_sigma(const Td3Config& cfg, long episode, long total_episodes) {
  if (total_episodes <= 1) return cfg.sigma_start;
  const double frac = std::clamp(static_cast<double>(episode) / static_cast<double>(total_episodes - 1), 0.0, 1.0);
  return cfg.sigma_start * std::pow(cfg.sigma_end / cfg.sigma_start, frac);
}

Batch make_batch(const std::vector<Transition>& items) {
  const auto n = static_cast<Eigen::Index>(items.size());
  Batch b;
  b.obs.resize(n, kObsDim);
  b.next_obs.resize(n, kObsDim);
  b.actions.resize(n, kActDim);
  b.rewards.resize(n);
  b.terminal.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Transition& t = items[static_cast<std::size_t>(r)];
    for (int c = 0; c < kObsDim; ++c) {
      b.obs(r, c) = t.state[static_cast<std::size_t>(c)];
      b.next_obs(r, c) = t.next_state[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < kActDim; ++c) b.actions(r, c) = t.action[static_cast<std::size_t>(c)];
    b.rewards(r) = t.reward;
    b.terminal(r) = t.terminal ? 1.0 : 0.0;
  }
  return b;
}

Td3Trainer::Td3Trainer(Td3Config cfg)
    : actor(cfg.hidden),
      actor_target(cfg.hidden),
      q1(cfg.hidden),
      q2(cfg.hidden),
      q1_target(cfg.hidden),
      q2_target(cfg.hidden),
      cfg_(cfg),
      rng_(cfg.seed) {
  cfg_.validate();
  actor.init(rng_);
  q1.init(rng_);
  q2.init(rng_);
  nn::copy_values(actor.params(), actor_target.params());
  nn::copy_values(q1.params(), q1_target.params());
  nn::copy_values(q2.params(), q2_target.params());
  actor_opt = nn::Adam(actor.params(), cfg_.lr_actor);
  q1_opt = nn::Adam(q1.params(), cfg_.lr_critic);
  q2_opt = nn::Adam(q2.params(), cfg_.lr_critic);
}

Eigen::MatrixXd Td3Trainer::act(const Eigen::MatrixXd& obs) { return actor.forward(obs); }

Eigen::VectorXd Td3Trainer::targets(const Batch& batch) {
  Eigen::MatrixXd next = actor_target.forward(batch.next_obs);
  std::normal_distribution<double> noise(0.0, cfg_.target_noise);
  for (Eigen::Index j = 0; j < next.cols(); ++j) {
    for (Eigen::Index i = 0; i < next.rows(); ++i) {
      const double e = std::clamp(noise(rng_), -cfg_.noise_clip, cfg_.noise_clip);
      next(i, j) = std::clamp(next(i, j) + e, -1.0, 1.0);
    }
  }
  const Eigen::VectorXd t1 = q1_target.forward(batch.next_obs, next);
  const Eigen::VectorXd t2 = q2_target.forward(batch.next_obs, next);
  const Eigen::VectorXd alive = (1.0 - batch.terminal.array()).matrix();
  return batch.rewards + cfg_.gamma * alive.cwiseProduct(t1.cwiseMin(t2));
}

UpdateStats Td3Trainer::update(const Batch& batch) {
  const double n = static_cast<double>(batch.rewards.size());
  const Eigen::VectorXd y = targets(batch);
  UpdateStats stats;

  const auto critic_step = [&](Critic& q, nn::Adam& opt) {
    const Eigen::VectorXd diff = q.forward(batch.obs, batch.actions) - y;
    const auto params = q.params();
    nn::zero_grads(params);
    q.backward((2.0 / n) * diff);
    opt.step(params);
    return diff.squaredNorm() / n;
  };
  stats.critic_loss = 0.5 * (critic_step(q1, q1_opt) + critic_step(q2, q2_opt));
  ++updates_;

  if (updates_ % cfg_.policy_delay == 0) {
    const Eigen::MatrixXd a = actor.forward(batch.obs);
    const Eigen::VectorXd q = q1.forward(batch.obs, a);
    stats.actor_loss = -q.mean();
    const auto critic_params = q1.params();
    const Eigen::MatrixXd d_input = q1.backward(Eigen::VectorXd::Constant(q.size(), -1.0 / n));
    nn::zero_grads(critic_params);
    const auto actor_params = actor.params();
    nn::zero_grads(actor_params);
    actor.backward(d_input.rightCols(kActDim));
    actor_opt.step(actor_params);

    nn::soft_update(actor_params, actor_target.params(), cfg_.tau);
    nn::soft_update(critic_params, q1_target.params(), cfg_.tau);
    nn::soft_update(q2.params(), q2_target.params(), cfg_.tau);
  }
  return stats;
}

std::vector<nn::ParamRef> Td3Trainer::state_tensors() {
  std::vector<nn::ParamRef> out;
  const auto add = [&](std::vector<nn::ParamRef> ps, const std::string& prefix) {
    for (auto& p : ps) {
      p.name = prefix + "." + p.name;
      out.push_back(std::move(p));
    }
  };
  add(actor.params(), "actor");
  add(q1.params(), "q1");
  add(q2.params(), "q2");
  add(actor_target.params(), "actor_target");
  add(q1_target.params(), "q1_target");
  add(q2_target.params(), "q2_target");
  const auto add_moments = [&](nn::Adam& opt, const std::string& prefix) {
    for (std::size_t k = 0; k < opt.m.size(); ++k) {
      out.push_back({prefix + ".m" + std::to_string(k), &opt.m[k], nullptr});
      out.push_back({prefix + ".v" + std::to_string(k), &opt.v[k], nullptr});
    }
  };
  add_moments(actor_opt, "actor_opt");
  add_moments(q1_opt, "q1_opt");
  add_moments(q2_opt, "q2_opt");
  return out;
}

// Checkpoint layout, all integers and floats little-endian:
//   8 bytes   magic "ATRSTD3\0"
//   u32       format version
//   u32 x 4   observation dim, action dim, hidden width, head count
//   u64       update counter
//   u64 x 3   optimizer step counters (actor, q1, q2)
//   u32       tensor count
//   tensors   u64 element count, then that many float64, column-major, in
//             state_tensors() order
namespace {

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian host");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw CheckpointError(CheckpointError::Kind::kTruncated, "checkpoint truncated");
  return value;
}

struct Header {
  std::uint32_t obs_dim, act_dim, hidden, heads;
  std::uint64_t updates, actor_t, q1_t, q2_t;
};

Header read_header(std::istream& is) {
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is) throw CheckpointError(CheckpointError::Kind::kTruncated, "checkpoint truncated");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CheckpointError(CheckpointError::Kind::kMagic, "not a policy checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  Header h{};
  h.obs_dim = get<std::uint32_t>(is);
  h.act_dim = get<std::uint32_t>(is);
  h.hidden = get<std::uint32_t>(is);
  h.heads = get<std::uint32_t>(is);
  if (h.obs_dim != kObsDim || h.act_dim != kActDim || h.heads != kActDim || h.hidden == 0 || h.hidden > (1u << 16)) {
    throw CheckpointError(CheckpointError::Kind::kShape, "checkpoint architecture not supported");
  }
  h.updates = get<std::uint64_t>(is);
  h.actor_t = get<std::uint64_t>(is);
  h.q1_t = get<std::uint64_t>(is);
  h.q2_t = get<std::uint64_t>(is);
  return h;
}

void read_into(Td3Trainer& trainer, const Header& h, std::istream& is) {
  if (static_cast<int>(h.hidden) != trainer.config().hidden) {
    throw CheckpointError(CheckpointError::Kind::kShape,
                          "checkpoint hidden width " + std::to_string(h.hidden) + " does not match " +
                              std::to_string(trainer.config().hidden));
  }
  auto tensors = trainer.state_tensors();
  const auto count = get<std::uint32_t>(is);
  if (count != tensors.size()) throw CheckpointError(CheckpointError::Kind::kShape, "checkpoint tensor count mismatch");
  // Stage everything so a bad file leaves the trainer untouched.
  std::vector<Eigen::MatrixXd> staged;
  staged.reserve(tensors.size());
  for (const auto& t : tensors) {
    const auto len = get<std::uint64_t>(is);
    if (len != static_cast<std::uint64_t>(t.value->size())) {
      throw CheckpointError(CheckpointError::Kind::kShape, "tensor " + t.name + " has the wrong size");
    }
    Eigen::MatrixXd m(t.value->rows(), t.value->cols());
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(len * sizeof(double)));
    if (!is) throw CheckpointError(CheckpointError::Kind::kTruncated, "checkpoint truncated in " + t.name);
    staged.push_back(std::move(m));
  }
  for (std::size_t k = 0; k < tensors.size(); ++k) *tensors[k].value = std::move(staged[k]);
  trainer.actor_opt.t = static_cast<long>(h.actor_t);
  trainer.q1_opt.t = static_cast<long>(h.q1_t);
  trainer.q2_opt.t = static_cast<long>(h.q2_t);
}

std::ifstream open_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open checkpoint " + path);
  return is;
}

}  // namespace

void save_checkpoint(Td3Trainer& trainer, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write checkpoint " + path);
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, kObsDim);
  put<std::uint32_t>(os, kActDim);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(trainer.config().hidden));
  put<std::uint32_t>(os, kActDim);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(trainer.updates()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(trainer.actor_opt.t));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(trainer.q1_opt.t));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(trainer.q2_opt.t));
  const auto tensors = trainer.state_tensors();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(t.value->size()));
    os.write(reinterpret_cast<const char*>(t.value->data()),
             static_cast<std::streamsize>(t.value->size() * static_cast<Eigen::Index>(sizeof(double))));
  }
  if (!os) throw CheckpointError(CheckpointError::Kind::kIo, "failed writing checkpoint " + path);
}

void load_checkpoint(Td3Trainer& trainer, const std::string& path) {
  std::ifstream is = open_checkpoint(path);
  const Header h = read_header(is);
  read_into(trainer, h, is);
  trainer.updates_ = static_cast<long>(h.updates);
}

Td3Trainer load_checkpoint(const std::string& path) {
  std::ifstream is = open_checkpoint(path);
  const Header h = read_header(is);
  Td3Config cfg;
  cfg.hidden = static_cast<int>(h.hidden);
  Td3Trainer trainer(cfg);
  read_into(trainer, h, is);
  trainer.updates_ = static_cast<long>(h.updates);
  return trainer;
}

}  // namespace atrs

