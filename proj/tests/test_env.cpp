#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "atrs/env.hpp"
#include "atrs/errors.hpp"

using namespace atrs;

namespace {

const ProblemInstance& short_instance() {
  static const ProblemInstance inst = make_instance(21, 0.2, ScaleClass::kShort);
  return inst;
}

std::vector<RawAction> random_actions(std::mt19937_64& rng, int n, double split_prob) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), coin(0.0, 1.0);
  std::vector<RawAction> acts(static_cast<std::size_t>(n));
  for (auto& a : acts) {
    a = {u(rng), u(rng), u(rng), u(rng)};
    if (coin(rng) > split_prob) a[0] = std::min(a[0], 0.3);
  }
  return acts;
}

}  // namespace

TEST_CASE("log mapping and budget examples") {
  CHECK(log_floor10(1e-4) == doctest::Approx(-4.0).epsilon(1e-15));
  CHECK(log_floor10(0.0) == kLogFloor);
  CHECK(log_floor10(1e-30) == kLogFloor);
  CHECK(log_floor10(std::nan("")) == kLogFloor);

  Eigen::MatrixXd w(2, 6);
  for (int k = 0; k < 6; ++k) w.col(k) = Eigen::Vector2d(k, 0.5 * k);
  SolverConfig cfg;
  cfg.samples = 0;
  ConsensusAdmm solver(w, std::vector<double>(5, 1.0), std::vector<AxisBox>(5, AxisBox::unbounded(2)), cfg);
  solver.iterate_block(3);
  const auto obs = observe(solver, 20);
  REQUIRE(obs.size() == 5u);
  for (int i = 0; i < 5; ++i) {
    const auto& o = obs[static_cast<std::size_t>(i)];
    CHECK(o[kObsBudget] == 0.25);
    CHECK(o[kObsLogEps] == log_floor10(solver.segment(i).eps));
    CHECK(o[kObsDuration] == 1.0);
    CHECK(std::abs(o[kObsBoundaryBias]) <= 1.0);
    // Global block is identical across agents.
    for (int g = kObsMaxEps; g < kObsDim; ++g) CHECK(o[static_cast<std::size_t>(g)] == obs[0][static_cast<std::size_t>(g)]);
    CHECK(o[kObsMaxEps] >= o[kObsLogEps]);
  }
}

TEST_CASE("trend is the tanh of the least-squares slope") {
  CHECK(residual_trend(std::deque<double>(10, -3.0), 10) == 0.0);
  CHECK(residual_trend({}, 10) == 0.0);
  CHECK(residual_trend({-2.0}, 10) == 0.0);
  // log eps falling 0.1 per iteration over a 10-wide window: slope -0.9 in window units.
  std::deque<double> h;
  for (int k = 0; k < 10; ++k) h.push_back(-1.0 - 0.1 * k);
  CHECK(residual_trend(h, 10) == doctest::Approx(std::tanh(-0.9)).epsilon(1e-12));
  // Noise around a flat line gives the same slope as its regression.
  std::deque<double> noisy{-3.0, -2.9, -3.1, -3.0, -2.95, -3.05, -3.0, -3.0, -2.9, -3.1};
  double mx = 4.5 / 9.0, my = 0.0;
  for (double v : noisy) my += v / 10.0;
  double sxy = 0.0, sxx = 0.0;
  for (int k = 0; k < 10; ++k) {
    sxy += (k / 9.0 - mx) * (noisy[static_cast<std::size_t>(k)] - my);
    sxx += (k / 9.0 - mx) * (k / 9.0 - mx);
  }
  CHECK(residual_trend(noisy, 10) == doctest::Approx(std::tanh(sxy / sxx)).epsilon(1e-12));
}

TEST_CASE("decode_action examples") {
  CHECK(decode_action({0, 0, 0, 0}).spatial_ratio == 0.5);
  CHECK(decode_action({0, 1, 1, 0}).time_ratio == doctest::Approx(0.9));
  CHECK(decode_action({0, 0, 0, -1}).inflation == 0.0);
  CHECK(decode_action({0, 0, 0, 1}).inflation == doctest::Approx(0.3));
  CHECK(decode_action({0, -1, 0, 0}).spatial_ratio == doctest::Approx(0.1));
  CHECK(decode_action({0, 0.5, -0.5, 0}).time_ratio == doctest::Approx(0.6));
}

TEST_CASE("decoded commands always satisfy their ranges") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> wide(-5.0, 5.0);
  std::uniform_int_distribution<int> special(0, 19);
  const double odd[] = {std::nan(""), std::numeric_limits<double>::infinity(),
                        -std::numeric_limits<double>::infinity(), 1.0, -1.0};
  for (int trial = 0; trial < 100000; ++trial) {
    RawAction a;
    for (double& x : a) {
      const int s = special(rng);
      x = s < 5 ? odd[s] : wide(rng);
    }
    const SplitCommand c = decode_action(a);
    REQUIRE(c.spatial_ratio >= 0.1);
    REQUIRE(c.spatial_ratio <= 0.9);
    REQUIRE(c.time_ratio >= 0.1);
    REQUIRE(c.time_ratio <= 0.9);
    REQUIRE(c.inflation >= 0.0);
    REQUIRE(c.inflation <= 0.3);
  }
}

TEST_CASE("election examples") {
  const auto gates = [](std::vector<double> g) {
    std::vector<RawAction> a;
    for (double v : g) a.push_back({v, 0, 0, 0});
    return a;
  };
  CHECK(elect(gates({0.2, 0.5, 0.4}), 0.3) == 1);
  CHECK_FALSE(elect(gates({0.3, 0.1, -1.0}), 0.3).has_value());
  CHECK(elect(gates({0.5, 0.5}), 0.3) == 0);
  CHECK_FALSE(elect({}, 0.3).has_value());
}

TEST_CASE("fuzzed elections pick at most one maximal gate above threshold") {
  std::mt19937_64 rng(321);
  std::uniform_int_distribution<int> count(1, 40), coarse(-4, 4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int round = 0; round < 10000; ++round) {
    std::vector<RawAction> a(static_cast<std::size_t>(count(rng)));
    // Coarse values make ties frequent.
    for (auto& x : a) x = {round % 2 ? coarse(rng) / 4.0 : u(rng), 0, 0, 0};
    const auto w = elect(a, 0.3);
    double best = -2.0;
    for (const auto& x : a) best = std::max(best, x[0]);
    if (best > 0.3) {
      REQUIRE(w.has_value());
      CHECK(a[static_cast<std::size_t>(*w)][0] == best);
      for (int i = 0; i < *w; ++i) CHECK(a[static_cast<std::size_t>(i)][0] < best);
    } else {
      CHECK_FALSE(w.has_value());
    }
  }
}

TEST_CASE("each step changes the segment count by zero or one") {
  std::mt19937_64 rng(8);
  for (int episode = 0; episode < 6; ++episode) {
    ResplitEnv env(short_instance(), {}, {});
    env.reset();
    while (!env.done()) {
      const int n = env.solver().num_segments();
      const auto acts = random_actions(rng, n, 0.2);
      const auto res = env.step(acts);
      const int after = env.solver().num_segments();
      if (res.info.winner) {
        CHECK(after == n + 1);
      } else {
        CHECK(after == n);
      }
      if (!elect(acts, 0.3)) CHECK_FALSE(res.info.split_rejected);
      CHECK(res.rewards.size() == static_cast<std::size_t>(n));
      CHECK(res.next_observations.size() == static_cast<std::size_t>(n));
      CHECK(res.observations.size() == static_cast<std::size_t>(after));
      CHECK(env.splits() <= env.decision_steps());
    }
    CHECK(env.decision_steps() <= env.step_budget());
  }
}

TEST_CASE("reward decomposition is exact") {
  std::mt19937_64 rng(19);
  RewardConfig reward;
  int splits_seen = 0;
  for (int episode = 0; episode < 4; ++episode) {
    ResplitEnv env(short_instance(), {}, reward);
    env.set_guidance(0.7);
    env.reset();
    while (!env.done()) {
      const double prev = log_floor10(env.solver().status().max_residual);
      const auto res = env.step(random_actions(rng, env.solver().num_segments(), 0.3));
      const StepInfo& info = res.info;
      CHECK(info.r_prog == reward.lambda[0] * (prev - log_floor10(env.solver().status().max_residual)));
      CHECK(info.r_step == -reward.lambda[1]);
      for (std::size_t i = 0; i < res.rewards.size(); ++i) {
        if (info.winner && static_cast<int>(i) == *info.winner) {
          CHECK(res.rewards[i] == info.r_sys() + info.r_act());
          CHECK(info.r_split == -reward.lambda[3]);
          CHECK(info.r_inf == -reward.lambda[5] * info.command.inflation);
          CHECK(info.r_bal <= 0.0);
          ++splits_seen;
        } else {
          CHECK(res.rewards[i] == info.r_sys());
        }
      }
      if (!res.done) CHECK(info.r_term == 0.0);
    }
  }
  CHECK(splits_seen > 0);
}

TEST_CASE("guidance rewards shifting the split away from the high-residual side") {
  std::mt19937_64 rng(55);
  int checked = 0;
  for (int episode = 0; episode < 30 && checked < 20; ++episode) {
    ResplitEnv env(make_instance(300 + static_cast<std::uint64_t>(episode), 0.2, ScaleClass::kShort), {}, {});
    env.set_guidance(1.0);
    env.reset();
    while (!env.done()) {
      const auto obs = env.observations();
      auto acts = random_actions(rng, env.solver().num_segments(), 0.3);
      const auto res = env.step(acts);
      if (!res.info.winner) continue;
      const int w = *res.info.winner;
      const double delta = obs[static_cast<std::size_t>(w)][kObsBoundaryBias];
      const double shift = acts[static_cast<std::size_t>(w)][1] + acts[static_cast<std::size_t>(w)][2];
      if (delta * shift < 0.0) {
        CHECK(res.info.r_guide >= 0.0);
        ++checked;
      } else {
        CHECK(res.info.r_guide <= 0.0);
      }
    }
  }
  CHECK(checked > 0);

  // With guidance fully decayed the term vanishes.
  ResplitEnv env(short_instance(), {}, {});
  env.set_guidance(0.0);
  env.reset();
  std::vector<RawAction> acts(static_cast<std::size_t>(env.solver().num_segments()), RawAction{-1, 0, 0, 0});
  acts[0] = {0.9, -0.8, -0.9, 0.5};
  const auto res = env.step(acts);
  if (res.info.winner) CHECK(res.info.r_guide == 0.0);
}

TEST_CASE("guidance decay schedule") {
  CHECK(guidance_decay(0, 1000, 0.3) == 1.0);
  CHECK(guidance_decay(150, 1000, 0.3) == doctest::Approx(0.5));
  CHECK(guidance_decay(300, 1000, 0.3) == 0.0);
  CHECK(guidance_decay(900, 1000, 0.3) == 0.0);
  CHECK(guidance_decay(5, 1000, 0.0) == 0.0);
}

TEST_CASE("terminal rewards") {
  const auto run_fixed = [](const ProblemInstance& inst, SolverConfig solver, RewardConfig reward) {
    ResplitEnv env(inst, solver, reward);
    env.reset();
    StepResult last;
    while (!env.done()) {
      last = env.step(std::vector<RawAction>(static_cast<std::size_t>(env.solver().num_segments()),
                                             RawAction{-1, 0, 0, -1}));
    }
    return std::pair{last, env.solver().status()};
  };
  ProblemInstance inst = short_instance();
  RewardConfig reward;

  SUBCASE("converged below the budget earns the iteration bonus") {
    const auto [res, st] = run_fixed(inst, {}, reward);
    REQUIRE(res.info.converged);
    CHECK(res.info.r_term == doctest::Approx(reward.r_conv + reward.lambda[2] * (*inst.k_base - st.iterations)));
    CHECK(*inst.k_base == st.iterations);
  }
  SUBCASE("converged at the budget earns half") {
    reward.n_max_factor = 1.0;
    const auto [res, st] = run_fixed(inst, {}, reward);
    REQUIRE(res.info.converged);
    CHECK(res.info.r_term == 0.5 * reward.r_conv);
  }
  SUBCASE("missing baseline count skips the bonus") {
    inst.k_base.reset();
    const auto [res, st] = run_fixed(inst, {}, reward);
    REQUIRE(res.info.converged);
    CHECK(res.info.r_term == reward.r_conv);
  }
  SUBCASE("running out of iterations fails") {
    SolverConfig tight;
    tight.max_iter = 50;
    const auto [res, st] = run_fixed(inst, tight, reward);
    CHECK(res.info.failed);
    CHECK(res.done);
    CHECK(res.info.r_term == -reward.r_fail);
  }
}

TEST_CASE("transitions map agents past the winner one index right") {
  ResplitEnv env(short_instance(), {}, {});
  env.reset();
  const int n = env.solver().num_segments();
  REQUIRE(n >= 2);
  std::vector<RawAction> acts(static_cast<std::size_t>(n), RawAction{-1, 0, 0, -1});
  const int w = n / 2;
  acts[static_cast<std::size_t>(w)] = {0.9, 0.0, 0.0, 1.0};
  const auto res = env.step(acts);
  REQUIRE(res.info.winner == w);
  REQUIRE(res.observations.size() == static_cast<std::size_t>(n + 1));
  for (int i = 0; i < n; ++i) {
    const int j = i > w ? i + 1 : i;
    CHECK(res.next_observations[static_cast<std::size_t>(i)] == res.observations[static_cast<std::size_t>(j)]);
  }
  CHECK(res.info.command.inflation == doctest::Approx(0.3));
}

TEST_CASE("environment contract errors") {
  ResplitEnv env(short_instance(), {}, {});
  CHECK_THROWS_AS(env.step({}), std::logic_error);
  env.reset();
  CHECK_THROWS_AS(env.step({}), std::invalid_argument);
  RewardConfig bad;
  bad.lambda[2] = -1.0;
  CHECK_THROWS_AS(ResplitEnv(short_instance(), {}, bad), ConfigError);
  bad = {};
  bad.n_max_factor = 0.5;
  CHECK_THROWS_AS(ResplitEnv(short_instance(), {}, bad), ConfigError);
}

TEST_CASE("transition sink accepts concurrent appends") {
  TransitionSink sink;
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&sink] {
      for (int k = 0; k < 250; ++k) sink.append(std::vector<Transition>(2));
    });
  }
  for (auto& w : workers) w.join();
  CHECK(sink.drain().size() == 2000u);
  CHECK(sink.drain().empty());
}
