#include "atrs/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace atrs::nn {

Linear::Linear(int in, int out)
    : weight(Mat::Zero(out, in)),
      bias(Mat::Zero(out, 1)),
      grad_weight(Mat::Zero(out, in)),
      grad_bias(Mat::Zero(out, 1)) {}

void Linear::init_uniform(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in()));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index j = 0; j < weight.cols(); ++j)
    for (Eigen::Index i = 0; i < weight.rows(); ++i) weight(i, j) = u(rng);
  for (Eigen::Index i = 0; i < bias.rows(); ++i) bias(i, 0) = u(rng);
}

Mat Linear::forward(const Mat& x) {
  if (x.rows() != weight.cols()) throw std::invalid_argument("linear layer input size mismatch");
  x_ = x;
  Mat y = weight * x;
  y.colwise() += bias.col(0);
  return y;
}

Mat Linear::backward(const Mat& dy) {
  grad_weight.noalias() += dy * x_.transpose();
  grad_bias += dy.rowwise().sum();
  return weight.transpose() * dy;
}

void Linear::params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  out.push_back({prefix + ".bias", &bias, &grad_bias});
}

LayerNorm::LayerNorm(int dim)
    : gain(Mat::Ones(dim, 1)),
      offset(Mat::Zero(dim, 1)),
      grad_gain(Mat::Zero(dim, 1)),
      grad_offset(Mat::Zero(dim, 1)) {}

Mat LayerNorm::forward(const Mat& x) {
  const double d = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().sum() / d;
  xhat_ = x.rowwise() - mean;
  const Eigen::RowVectorXd var = xhat_.colwise().squaredNorm() / d;
  inv_std_ = (var.array() + kEps).rsqrt().matrix();
  xhat_ = xhat_ * inv_std_.asDiagonal();
  Mat y = gain.col(0).asDiagonal() * xhat_;
  y.colwise() += offset.col(0);
  return y;
}

Mat LayerNorm::backward(const Mat& dy) {
  const double d = static_cast<double>(dy.rows());
  grad_gain += dy.cwiseProduct(xhat_).rowwise().sum();
  grad_offset += dy.rowwise().sum();
  const Mat dxhat = gain.col(0).asDiagonal() * dy;
  const Eigen::RowVectorXd mean_d = dxhat.colwise().sum() / d;
  const Eigen::RowVectorXd mean_dx = dxhat.cwiseProduct(xhat_).colwise().sum() / d;
  Mat dx = dxhat.rowwise() - mean_d;
  dx -= xhat_ * mean_dx.asDiagonal();
  return dx * inv_std_.asDiagonal();
}

void LayerNorm::params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gain", &gain, &grad_gain});
  out.push_back({prefix + ".offset", &offset, &grad_offset});
}

Mat Relu::forward(const Mat& x) {
  mask_ = (x.array() > 0.0).cast<double>().matrix();
  return x.cwiseProduct(mask_);
}

Mat Relu::backward(const Mat& dy) const { return dy.cwiseProduct(mask_); }

Mat Tanh::forward(const Mat& x) {
  y_ = x.array().tanh().matrix();
  return y_;
}

Mat Tanh::backward(const Mat& dy) const { return dy.cwiseProduct((1.0 - y_.array().square()).matrix()); }

Trunk::Trunk(int in, int hidden) : fc1(in, hidden), fc2(hidden, hidden), ln1(hidden), ln2(hidden) {}

void Trunk::init(std::mt19937_64& rng) {
  fc1.init_uniform(rng);
  fc2.init_uniform(rng);
}

Mat Trunk::forward(const Mat& x) {
  Mat h = r1_.forward(ln1.forward(fc1.forward(x)));
  return r2_.forward(ln2.forward(fc2.forward(h)));
}

Mat Trunk::backward(const Mat& dy) {
  Mat g = fc2.backward(ln2.backward(r2_.backward(dy)));
  return fc1.backward(ln1.backward(r1_.backward(g)));
}

void Trunk::params(const std::string& prefix, std::vector<ParamRef>& out) {
  fc1.params(prefix + ".fc1", out);
  ln1.params(prefix + ".ln1", out);
  fc2.params(prefix + ".fc2", out);
  ln2.params(prefix + ".ln2", out);
}

Mat concat_rows(const Mat& top, const Mat& bottom) {
  if (top.cols() != bottom.cols()) throw std::invalid_argument("concatenated batches differ in size");
  Mat out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

void zero_grads(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) p.grad->setZero();
}

void copy_values(const std::vector<ParamRef>& from, const std::vector<ParamRef>& to) {
  if (from.size() != to.size()) throw std::invalid_argument("parameter lists differ");
  for (std::size_t k = 0; k < from.size(); ++k) *to[k].value = *from[k].value;
}

void soft_update(const std::vector<ParamRef>& online, const std::vector<ParamRef>& target, double tau) {
  if (online.size() != target.size()) throw std::invalid_argument("parameter lists differ");
  for (std::size_t k = 0; k < online.size(); ++k) {
    *target[k].value = (1.0 - tau) * *target[k].value + tau * *online[k].value;
  }
}

Adam::Adam(const std::vector<ParamRef>& params, double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {
  for (const ParamRef& p : params) {
    m.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    v.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
  }
}

void Adam::step(const std::vector<ParamRef>& params) {
  if (params.size() != m.size()) throw std::invalid_argument("optimizer bound to a different parameter list");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Mat& g = *params[k].grad;
    m[k] = beta1 * m[k] + (1.0 - beta1) * g;
    v[k] = beta2 * v[k] + (1.0 - beta2) * g.cwiseAbs2();
    params[k].value->array() -= lr * (m[k].array() / c1) / ((v[k].array() / c2).sqrt() + eps);
  }
}

}  // namespace atrs::nn
