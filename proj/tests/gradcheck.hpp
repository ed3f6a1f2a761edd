// Central finite-difference gradient checks shared by the unit and
// acceptance suites.

#ifndef ATRS_TESTS_GRADCHECK_HPP_
#define ATRS_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "atrs/nn.hpp"

namespace gradcheck {

using atrs::nn::Mat;

inline constexpr double kStep = 1e-5;
inline constexpr double kRelTol = 1e-4;

inline Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

inline bool close(double analytic, double numeric) {
  return std::abs(analytic - numeric) <= kRelTol * std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Central differences of `loss` with respect to selected entries of `x`;
// every entry when `samples` is 0, otherwise that many random ones. A probe
// that straddles a ReLU kink gives step-size dependent estimates and is skipped.
inline int check_entries(Mat& x, const Mat& analytic, const std::function<double()>& loss, std::mt19937_64& rng,
                         int samples = 0) {
  int bad = 0;
  const auto central = [&](Eigen::Index i, Eigen::Index j, double h) {
    const double keep = x(i, j);
    x(i, j) = keep + h;
    const double up = loss();
    x(i, j) = keep - h;
    const double down = loss();
    x(i, j) = keep;
    return (up - down) / (2.0 * h);
  };
  const auto probe = [&](Eigen::Index i, Eigen::Index j) {
    const double numeric = central(i, j, kStep);
    if (close(analytic(i, j), numeric)) return;
    if (!close(central(i, j, 0.1 * kStep), numeric)) return;
    ++bad;
  };
  if (samples == 0) {
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) probe(i, j);
  } else {
    std::uniform_int_distribution<Eigen::Index> ui(0, x.rows() - 1), uj(0, x.cols() - 1);
    for (int k = 0; k < samples; ++k) probe(ui(rng), uj(rng));
  }
  return bad;
}

}  // namespace gradcheck

#endif  // ATRS_TESTS_GRADCHECK_HPP_
