#include <doctest.h>

#include <algorithm>
#include <functional>
#include <limits>
#include <random>

#include "atrs/nn.hpp"
#include "atrs/td3.hpp"
#include "gradcheck.hpp"

using namespace atrs;
using nn::Mat;
using gradcheck::check_entries;
using gradcheck::random_mat;

namespace {

// Checks parameter and input gradients of a layer under the loss sum(W .* f(x)).
template <typename Layer>
void check_layer(Layer& layer, Mat x, std::mt19937_64& rng) {
  const Mat y = layer.forward(x);
  const Mat w = random_mat(rng, y.rows(), y.cols());
  std::vector<nn::ParamRef> params;
  layer.params("l", params);
  nn::zero_grads(params);
  const Mat dx = layer.backward(w);
  std::vector<Mat> grads;
  for (const auto& p : params) grads.push_back(*p.grad);
  const auto loss = [&] { return (w.array() * layer.forward(x).array()).sum(); };
  CHECK(check_entries(x, dx, loss, rng) == 0);
  for (std::size_t k = 0; k < params.size(); ++k) CHECK(check_entries(*params[k].value, grads[k], loss, rng) == 0);
}

}  // namespace

TEST_CASE("linear layer gradients") {
  std::mt19937_64 rng(1);
  nn::Linear l(7, 5);
  l.init_uniform(rng);
  check_layer(l, random_mat(rng, 7, 6), rng);
}

TEST_CASE("layer norm gradients") {
  std::mt19937_64 rng(2);
  nn::LayerNorm ln(9);
  ln.gain = random_mat(rng, 9, 1);
  ln.offset = random_mat(rng, 9, 1);
  check_layer(ln, random_mat(rng, 9, 5, 3.0), rng);
}

TEST_CASE("trunk gradients") {
  std::mt19937_64 rng(3);
  nn::Trunk t(6, 12);
  t.init(rng);
  check_layer(t, random_mat(rng, 6, 8), rng);
}

TEST_CASE("elementwise activations") {
  std::mt19937_64 rng(4);
  Mat x = random_mat(rng, 4, 7);
  const Mat w = random_mat(rng, 4, 7);
  nn::Relu relu;
  relu.forward(x);
  const Mat dr = relu.backward(w);
  CHECK(check_entries(x, dr, [&] { return (w.array() * relu.forward(x).array()).sum(); }, rng) == 0);
  nn::Tanh th;
  th.forward(x);
  const Mat dt = th.backward(w);
  CHECK(check_entries(x, dt, [&] { return (w.array() * th.forward(x).array()).sum(); }, rng) == 0);
}

TEST_CASE("actor and both critics match finite differences at full width") {
  std::mt19937_64 rng(5);
  Td3Config cfg;
  cfg.seed = 17;
  Td3Trainer trainer(cfg);
  for (int draw = 0; draw < 10; ++draw) {
    const Eigen::Index b = 3;
    Mat obs = random_mat(rng, b, kObsDim);
    Mat act = random_mat(rng, b, kActDim, 0.5).cwiseMax(-0.99).cwiseMin(0.99);

    {
      const Mat w = random_mat(rng, b, kActDim);
      const auto params = trainer.actor.params();
      nn::zero_grads(params);
      trainer.actor.forward(obs);
      const Mat d_obs = trainer.actor.backward(w);
      const auto loss = [&] { return (w.array() * trainer.actor.forward(obs).array()).sum(); };
      CHECK(check_entries(obs, d_obs, loss, rng) == 0);
      for (const auto& p : params) {
        const Mat g = *p.grad;
        CHECK(check_entries(*p.value, g, loss, rng, 20) == 0);
      }
    }
    for (Critic* q : {&trainer.q1, &trainer.q2}) {
      const Eigen::VectorXd w = random_mat(rng, b, 1);
      const auto params = q->params();
      nn::zero_grads(params);
      q->forward(obs, act);
      const Mat d_in = q->backward(w);
      REQUIRE(d_in.rows() == b);
      REQUIRE(d_in.cols() == kObsDim + kActDim);
      const auto loss = [&] { return w.dot(q->forward(obs, act)); };
      const Mat d_obs = d_in.leftCols(kObsDim), d_act = d_in.rightCols(kActDim);
      CHECK(check_entries(obs, d_obs, loss, rng) == 0);
      CHECK(check_entries(act, d_act, loss, rng) == 0);
      for (const auto& p : params) {
        const Mat g = *p.grad;
        CHECK(check_entries(*p.value, g, loss, rng, 20) == 0);
      }
    }
  }
}

TEST_CASE("zero weights give zero outputs") {
  std::mt19937_64 rng(6);
  Actor actor(32);
  Critic critic(32);
  for (auto& p : actor.params()) p.value->setZero();
  for (auto& p : critic.params()) p.value->setZero();
  const Mat obs = random_mat(rng, 5, kObsDim);
  CHECK(actor.forward(obs).isZero(0.0));
  CHECK(critic.forward(obs, random_mat(rng, 5, kActDim)).isZero(0.0));
}

TEST_CASE("shape and finiteness checks") {
  Actor actor(16);
  Critic critic(16);
  CHECK_THROWS_AS(actor.forward(Mat::Zero(2, kObsDim + 1)), std::invalid_argument);
  Mat bad = Mat::Zero(2, kObsDim);
  bad(1, 3) = std::nan("");
  CHECK_THROWS_AS(actor.forward(bad), std::invalid_argument);
  bad(1, 3) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(critic.forward(bad, Mat::Zero(2, kActDim)), std::invalid_argument);
  CHECK_THROWS_AS(critic.forward(Mat::Zero(2, kObsDim), Mat::Zero(3, kActDim)), std::invalid_argument);
  nn::Linear l(3, 2);
  CHECK_THROWS_AS(l.forward(Mat::Zero(4, 1)), std::invalid_argument);
}

TEST_CASE("actor outputs stay inside the open unit box") {
  std::mt19937_64 rng(7);
  Actor actor(64);
  actor.init(rng);
  const Mat a = actor.forward(random_mat(rng, 200, kObsDim, 10.0));
  CHECK(a.rows() == 200);
  CHECK(a.cols() == kActDim);
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("adam first step moves each weight by the learning rate") {
  nn::Linear l(2, 2);
  l.weight << 1, 2, 3, 4;
  std::vector<nn::ParamRef> params;
  l.params("l", params);
  nn::Adam opt(params, 0.01);
  l.grad_weight << 0.5, -2, 1e-3, 0;
  l.grad_bias << 1, -1;
  opt.step(params);
  CHECK(l.weight(0, 0) == doctest::Approx(1 - 0.01).epsilon(1e-6));
  CHECK(l.weight(0, 1) == doctest::Approx(2 + 0.01).epsilon(1e-6));
  CHECK(l.weight(1, 0) == doctest::Approx(3 - 0.01).epsilon(1e-4));
  CHECK(l.weight(1, 1) == 4.0);
  CHECK(opt.t == 1);
}
