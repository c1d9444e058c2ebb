#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace skyplan::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised on inconsistent tensor shapes or on backward() without a recorded forward.
class ShapeError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A trainable tensor and its gradient accumulator.
template <typename T>
struct Param {
  Matrix<T> value;
  Matrix<T> grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

/// Packed ragged batch layout. Record i owns rows [offsets[i], offsets[i+1]) of
/// a token matrix; offsets.front() == 0 and offsets.back() == row count.
using Segments = std::vector<int>;

/// Per-row validity flags for attention keys. Empty means every row is valid.
using KeyMask = std::vector<std::uint8_t>;

inline void check_segments(const Segments& seg, Eigen::Index rows, const char* what) {
  if (seg.empty() || seg.front() != 0 || seg.back() != rows) {
    throw ShapeError(std::string(what) + ": segment offsets do not cover the token rows");
  }
  for (std::size_t i = 1; i < seg.size(); ++i) {
    if (seg[i] < seg[i - 1]) {
      throw ShapeError(std::string(what) + ": segment offsets decrease");
    }
  }
}

template <typename T>
void relu_inplace(Matrix<T>& x) {
  x = x.cwiseMax(T(0));
}

template <typename T>
T softplus(T z) {
  return z > T(20) ? z : std::log1p(std::exp(z));
}

template <typename T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

} // namespace skyplan::nn
