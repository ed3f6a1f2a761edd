// Small dense layers with explicit forward/backward passes. Activations are
// stored one sample per column (features x batch).

#ifndef ATRS_NN_HPP_
#define ATRS_NN_HPP_

#include <array>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace atrs::nn {

using Mat = Eigen::MatrixXd;

struct ParamRef {
  std::string name;
  Mat* value;
  Mat* grad;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out);

  /// U(-1/sqrt(in), 1/sqrt(in)) for weights and offsets.
  void init_uniform(std::mt19937_64& rng);
  Mat forward(const Mat& x);
  Mat backward(const Mat& dy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }

  Mat weight, bias;  // out x in, out x 1
  Mat grad_weight, grad_bias;

 private:
  Mat x_;
};

class LayerNorm {
 public:
  static constexpr double kEps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int dim);

  Mat forward(const Mat& x);
  Mat backward(const Mat& dy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  Mat gain, offset;  // dim x 1
  Mat grad_gain, grad_offset;

 private:
  Mat xhat_;
  Eigen::RowVectorXd inv_std_;
};

class Relu {
 public:
  Mat forward(const Mat& x);
  Mat backward(const Mat& dy) const;

 private:
  Mat mask_;
};

class Tanh {
 public:
  Mat forward(const Mat& x);
  Mat backward(const Mat& dy) const;

 private:
  Mat y_;
};

/// affine -> layer norm -> relu, twice.
class Trunk {
 public:
  Trunk() = default;
  Trunk(int in, int hidden);

  void init(std::mt19937_64& rng);
  Mat forward(const Mat& x);
  Mat backward(const Mat& dy);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  Linear fc1, fc2;
  LayerNorm ln1, ln2;

 private:
  Relu r1_, r2_;
};

/// Stacks two column batches vertically; backward splits the gradient.
Mat concat_rows(const Mat& top, const Mat& bottom);

void zero_grads(const std::vector<ParamRef>& params);
void copy_values(const std::vector<ParamRef>& from, const std::vector<ParamRef>& to);
/// target <- (1 - tau) * target + tau * online
void soft_update(const std::vector<ParamRef>& online, const std::vector<ParamRef>& target, double tau);

class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<ParamRef>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step(const std::vector<ParamRef>& params);

  double lr = 0.0, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<Mat> m, v;
};

}  // namespace atrs::nn

#endif  // ATRS_NN_HPP_
