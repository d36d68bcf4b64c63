#pragma once

#include <cmath>

#include "latcomp/errors.hpp"
#include "latcomp/nn/tensor.hpp"

namespace latcomp::nn {

template <typename T>
struct LossGrad {
  double value = 0.0;
  TensorT<T> grad;  // with respect to the prediction
};

// Smoothed L1: mean over elements of sqrt(d^2 + eps^2). Identical inputs
// give exactly eps, not zero.
template <typename T>
LossGrad<T> charbonnier_loss(const TensorT<T>& pred, const TensorT<T>& target, double eps) {
  if (!same_shape(pred, target))
    throw DataError("loss shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  if (pred.empty()) throw DataError("loss of empty tensors");
  LossGrad<T> out;
  out.grad = TensorT<T>(pred.shape);
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    double r = std::sqrt(d * d + eps * eps);
    acc += r;
    out.grad.data[i] = static_cast<T>(d / (r * n));
  }
  out.value = acc / n;
  return out;
}

// Whole-tensor variant: a single sqrt over the mean squared error,
// sqrt(mean(d^2) + eps^2).
template <typename T>
LossGrad<T> charbonnier_global_loss(const TensorT<T>& pred, const TensorT<T>& target, double eps) {
  if (!same_shape(pred, target))
    throw DataError("loss shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  if (pred.empty()) throw DataError("loss of empty tensors");
  LossGrad<T> out;
  out.grad = TensorT<T>(pred.shape);
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    acc += d * d;
  }
  out.value = std::sqrt(acc / n + eps * eps);
  double scale = 1.0 / (out.value * n);
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    out.grad.data[i] = static_cast<T>(d * scale);
  }
  return out;
}

// Mean absolute error; the gradient at exact zeros is taken as zero.
template <typename T>
LossGrad<T> l1_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  if (!same_shape(pred, target))
    throw DataError("loss shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  if (pred.empty()) throw DataError("loss of empty tensors");
  LossGrad<T> out;
  out.grad = TensorT<T>(pred.shape);
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    acc += std::abs(d);
    out.grad.data[i] = static_cast<T>(d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0));
  }
  out.value = acc / n;
  return out;
}

template <typename T>
LossGrad<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  if (!same_shape(pred, target))
    throw DataError("loss shape mismatch: " + pred.shape_str() + " vs " + target.shape_str());
  if (pred.empty()) throw DataError("loss of empty tensors");
  LossGrad<T> out;
  out.grad = TensorT<T>(pred.shape);
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    acc += d * d;
    out.grad.data[i] = static_cast<T>(2.0 * d / n);
  }
  out.value = acc / n;
  return out;
}

template <typename T>
struct KlGrad {
  double value = 0.0;
  TensorT<T> dmu, dlogvar;
};

// Closed-form divergence of a diagonal Gaussian from the standard normal,
// 0.5*(mu^2 + sigma^2 - 1 - log sigma^2), averaged over all elements. A
// single element with mu=1 and log-variance 0 scores exactly 0.5.
template <typename T>
KlGrad<T> kl_gaussian(const TensorT<T>& mu, const TensorT<T>& logvar) {
  if (!same_shape(mu, logvar))
    throw DataError("kl shape mismatch: " + mu.shape_str() + " vs " + logvar.shape_str());
  if (mu.empty()) throw DataError("kl of empty tensors");
  KlGrad<T> out;
  out.dmu = TensorT<T>(mu.shape);
  out.dlogvar = TensorT<T>(logvar.shape);
  const double n = static_cast<double>(mu.size());
  double acc = 0.0;
  for (size_t i = 0; i < mu.data.size(); ++i) {
    double m = static_cast<double>(mu.data[i]);
    double lv = static_cast<double>(logvar.data[i]);
    double var = std::exp(lv);
    acc += 0.5 * (m * m + var - 1.0 - lv);
    out.dmu.data[i] = static_cast<T>(m / n);
    out.dlogvar.data[i] = static_cast<T>(0.5 * (var - 1.0) / n);
  }
  out.value = acc / n;
  return out;
}

}  // namespace latcomp::nn
