#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "trackedit/rng.hpp"

namespace trackedit::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// A trainable tensor and its accumulated gradient.
template <typename S>
struct Param {
  Mat<S> value;
  Mat<S> grad;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols) : value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }

  /// Uniform in ±1/sqrt(fan_in).
  void init_uniform(Rng& rng, Eigen::Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
  }
};

template <typename S, typename Model>
void zero_grads(Model& model) {
  model.visit([](const std::string&, Param<S>& p) { p.zero_grad(); });
}

/// Copies parameter values between precisions, matched by visit order.
template <typename To, typename From, typename ModelTo, typename ModelFrom>
void copy_params(ModelTo& to, ModelFrom& from) {
  std::vector<const Mat<From>*> src;
  from.visit([&](const std::string&, Param<From>& p) { src.push_back(&p.value); });
  std::size_t i = 0;
  to.visit([&](const std::string&, Param<To>& p) { p.value = src.at(i++)->template cast<To>(); });
}

}  // namespace trackedit::nn
