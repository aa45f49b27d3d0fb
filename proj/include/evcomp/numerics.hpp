#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace evc {

// Dense double-precision substrate for all weights and states.
// Row-major so that serialized buffers read in row order.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Checked matrix product. Internal code uses Eigen operators directly;
// this is the contract-checking entry point.
Mat matmul(const Mat& a, const Mat& b);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double dtanh(double x) { return 1.0 - x * x; }  // derivative via tanh output

// Elementwise in-place forms used by the cells.
inline void sigmoid_inplace(Vec& v) {
  v = (1.0 / (1.0 + (-v.array()).exp())).matrix();
}
inline void tanh_inplace(Vec& v) { v = v.array().tanh().matrix(); }

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace evc
