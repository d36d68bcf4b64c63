#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "latcomp/errors.hpp"
#include "latcomp/nn/ops.hpp"

namespace latcomp::nn {

// Adam with bias correction. Moment state is kept in double regardless of
// the parameter precision so long runs stay numerically stable.
template <typename T>
class Adam {
 public:
  Adam(std::vector<ParamRef<T>> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    if (!(lr_ > 0.0)) throw ConfigError("learning rate must be positive");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].value->data.size(), 0.0);
      v_[i].assign(params_[i].value->data.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& value = params_[i].value->data;
      const auto& grad = params_[i].grad->data;
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < value.size(); ++j) {
        double g = static_cast<double>(grad[j]);
        m[j] = b1_ * m[j] + (1.0 - b1_) * g;
        v[j] = b2_ * v[j] + (1.0 - b2_) * g * g;
        double mhat = m[j] / bc1;
        double vhat = v[j] / bc2;
        value[j] = static_cast<T>(static_cast<double>(value[j]) -
                                  lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->fill(T(0));
  }

  double lr() const { return lr_; }
  void set_lr(double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    lr_ = lr;
  }
  int64_t steps() const { return t_; }

 private:
  std::vector<ParamRef<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

}  // namespace latcomp::nn
