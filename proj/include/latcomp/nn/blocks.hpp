#pragma once

#include "latcomp/nn/ops.hpp"

namespace latcomp::nn {

// Residual unit: two rounds of [3x3 conv -> swish -> group norm] plus a
// skip path, with a 1x1 projection on the skip when the channel count
// changes. Norm statistics are per-sample, so inference needs no running
// averages.
template <typename T>
struct ResBlock {
  Conv2d<T> conv1, conv2;
  GroupNorm<T> gn1, gn2;
  Conv2d<T> proj;
  bool has_proj = false;

  struct Cache {
    TensorT<T> x;   // block input
    TensorT<T> a1;  // conv1 output (pre-activation)
    typename GroupNorm<T>::Cache g1;
    TensorT<T> h1;  // gn1 output, input to conv2
    TensorT<T> a2;  // conv2 output (pre-activation)
    typename GroupNorm<T>::Cache g2;
  };

  ResBlock() = default;

  ResBlock(int cin, int cout, int groups, Rng& rng)
      : conv1(cin, cout, 3, 1, 1, rng),
        conv2(cout, cout, 3, 1, 1, rng),
        gn1(cout, groups),
        gn2(cout, groups),
        has_proj(cin != cout) {
    if (has_proj) proj = Conv2d<T>(cin, cout, 1, 1, 0, rng);
  }

  TensorT<T> forward(const TensorT<T>& x, Cache& c) const {
    c.x = x;
    c.a1 = conv1.forward(x);
    c.h1 = gn1.forward(swish(c.a1), c.g1);
    c.a2 = conv2.forward(c.h1);
    TensorT<T> h2 = gn2.forward(swish(c.a2), c.g2);
    add_inplace(h2, has_proj ? proj.forward(x) : x);
    return h2;
  }

  TensorT<T> backward(const TensorT<T>& dy, const Cache& c) {
    TensorT<T> da2 = swish_backward(c.a2, gn2.backward(dy, c.g2));
    TensorT<T> dh1 = conv2.backward(c.h1, da2);
    TensorT<T> da1 = swish_backward(c.a1, gn1.backward(dh1, c.g1));
    TensorT<T> dx = conv1.backward(c.x, da1);
    if (has_proj) {
      add_inplace(dx, proj.backward(c.x, dy));
    } else {
      add_inplace(dx, dy);
    }
    return dx;
  }

  void zero_grad() {
    conv1.zero_grad();
    conv2.zero_grad();
    gn1.zero_grad();
    gn2.zero_grad();
    if (has_proj) proj.zero_grad();
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    conv1.params(prefix + ".conv1", out);
    gn1.params(prefix + ".gn1", out);
    conv2.params(prefix + ".conv2", out);
    gn2.params(prefix + ".gn2", out);
    if (has_proj) proj.params(prefix + ".proj", out);
  }
};

}  // namespace latcomp::nn
