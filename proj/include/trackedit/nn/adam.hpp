#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "trackedit/nn/tensor.hpp"

namespace trackedit::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer over every parameter a model visits. Moments
/// are matched to parameters by visit order.
template <typename S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  template <typename Model>
  void step(Model& model) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t i = 0;
    model.visit([&](const std::string&, Param<S>& p) {
      if (i == m_.size()) {
        m_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
      }
      Mat<S>& m = m_[i];
      Mat<S>& v = v_[i];
      ++i;
      if (cfg_.lr == 0.0) return;
      const S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2);
      m = b1 * m + (S(1) - b1) * p.grad;
      v = b2 * v + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
      const S step = S(cfg_.lr / c1);
      const S rc2 = S(1.0 / std::sqrt(c2));
      p.value.array() -= step * m.array() / ((v.array().sqrt() * rc2) + S(cfg_.eps));
    });
  }

  long steps() const { return t_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

}  // namespace trackedit::nn
