#pragma once

#include "skyplan/nn/model.hpp"

#include <cmath>

namespace skyplan::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are allocated lazily to match the visited
/// parameters; gradients are zeroed after each step.
template <typename T>
class Adam {
public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  [[nodiscard]] std::uint64_t steps() const { return step_; }
  [[nodiscard]] const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  /// Works on anything exposing visit(f(name, Param<T>&)).
  template <typename Module>
  void step(Module& module) {
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    std::size_t i = 0;
    module.visit([&](const std::string&, Param<T>& p) {
      if (i == m_.size()) {
        m_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
      }
      Matrix<T>& m = m_[i];
      Matrix<T>& v = v_[i];
      if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
        throw ShapeError("adam: parameter shape changed between steps");
      }
      const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
      m = b1 * m + (T(1) - b1) * p.grad;
      v = b2 * v + (T(1) - b2) * p.grad.cwiseAbs2();
      if (cfg_.lr != 0.0) {
        const T step_size = static_cast<T>(cfg_.lr / c1);
        const T inv_c2 = static_cast<T>(1.0 / std::sqrt(c2));
        const T eps = static_cast<T>(cfg_.eps);
        p.value.array() -= step_size * m.array() / (v.array().sqrt() * inv_c2 + eps);
      }
      p.zero_grad();
      ++i;
    });
  }

private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

template <typename T>
struct LossResult {
  double loss = 0.0;
  Matrix<T> grad;
};

/// Mean absolute error, accumulated in double. The subgradient is
/// sign(pred - target) / count with sign(0) = 0.
template <typename T>
LossResult<T> l1_loss(const Matrix<T>& pred, const Matrix<T>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("l1_loss: prediction and target shapes differ");
  }
  LossResult<T> out;
  out.grad.resize(pred.rows(), pred.cols());
  const auto n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double diff = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    sum += std::abs(diff);
    out.grad.data()[i] = static_cast<T>(diff > 0.0 ? 1.0 / n : (diff < 0.0 ? -1.0 / n : 0.0));
  }
  out.loss = n > 0 ? sum / n : 0.0;
  return out;
}

} // namespace skyplan::nn
