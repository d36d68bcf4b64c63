#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "latcomp/errors.hpp"
#include "latcomp/nn/rng.hpp"
#include "latcomp/nn/tensor.hpp"

namespace latcomp::nn {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Named view of one parameter tensor and its gradient; the unit the
// optimizer, checkpoint writer and gradient checks all operate on.
template <typename T>
struct ParamRef {
  std::string name;
  TensorT<T>* value = nullptr;
  TensorT<T>* grad = nullptr;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Unrolls x [C,H,W] into a [C*K*K, OH*OW] patch matrix (zero padding).
template <typename T>
void im2col(const TensorT<T>& x, int k, int stride, int pad, int oh, int ow,
            std::vector<T>& cols) {
  const int ci = x.channels(), H = x.height(), W = x.width();
  cols.assign(static_cast<size_t>(ci) * k * k * oh * ow, T(0));
  size_t row = 0;
  for (int c = 0; c < ci; ++c) {
    const T* src = x.ptr() + static_cast<size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        T* dst = cols.data() + row * static_cast<size_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy, dst += ow) {
          int y = oy * stride + ky - pad;
          if (y < 0 || y >= H) continue;  // row stays zero
          const T* line = src + static_cast<size_t>(y) * W;
          for (int ox = 0; ox < ow; ++ox) {
            int xx = ox * stride + kx - pad;
            if (xx >= 0 && xx < W) dst[ox] = line[xx];
          }
        }
      }
  }
}

// Scatter-adds a patch-matrix gradient back onto the input layout.
template <typename T>
void col2im_add(const std::vector<T>& cols, int ci, int H, int W, int k, int stride, int pad,
                int oh, int ow, TensorT<T>& dx) {
  size_t row = 0;
  for (int c = 0; c < ci; ++c) {
    T* dst = dx.ptr() + static_cast<size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        const T* src = cols.data() + row * static_cast<size_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy, src += ow) {
          int y = oy * stride + ky - pad;
          if (y < 0 || y >= H) continue;
          T* line = dst + static_cast<size_t>(y) * W;
          for (int ox = 0; ox < ow; ++ox) {
            int xx = ox * stride + kx - pad;
            if (xx >= 0 && xx < W) line[xx] += src[ox];
          }
        }
      }
  }
}

template <typename T>
struct Conv2d {
  int in_channels = 0, out_channels = 0, kernel = 1, stride = 1, pad = 0;
  TensorT<T> w;  // [Co, Ci*K*K]
  TensorT<T> b;  // [Co]
  TensorT<T> gw, gb;

  Conv2d() = default;

  Conv2d(int ci, int co, int k, int stride_, int pad_, Rng& rng)
      : in_channels(ci), out_channels(co), kernel(k), stride(stride_), pad(pad_) {
    if (ci < 1 || co < 1 || k < 1 || stride_ < 1 || pad_ < 0)
      throw ConfigError("bad convolution geometry");
    w = TensorT<T>({co, ci * k * k});
    b = TensorT<T>({co});
    gw = TensorT<T>({co, ci * k * k});
    gb = TensorT<T>({co});
    // He-style normal init scaled by fan-in.
    T scale = static_cast<T>(std::sqrt(2.0 / (static_cast<double>(ci) * k * k)));
    for (auto& v : w.data) v = static_cast<T>(rng.normal()) * scale;
  }

  TensorT<T> forward(const TensorT<T>& x, std::vector<T>& cols) const {
    if (x.channels() != in_channels)
      throw DataError("conv input has " + std::to_string(x.channels()) + " channels, expected " +
                      std::to_string(in_channels));
    int oh = conv_out_dim(x.height(), kernel, stride, pad);
    int ow = conv_out_dim(x.width(), kernel, stride, pad);
    if (oh < 1 || ow < 1) throw DataError("conv input " + x.shape_str() + " too small");
    im2col(x, kernel, stride, pad, oh, ow, cols);

    TensorT<T> y({out_channels, oh, ow});
    const int kk = in_channels * kernel * kernel;
    ConstMatMap<T> wm(w.ptr(), out_channels, kk);
    ConstMatMap<T> cm(cols.data(), kk, static_cast<Eigen::Index>(oh) * ow);
    MatMap<T> ym(y.ptr(), out_channels, static_cast<Eigen::Index>(oh) * ow);
    ym.noalias() = wm * cm;

    const int64_t plane = static_cast<int64_t>(oh) * ow;
    for (int co = 0; co < out_channels; ++co) {
      T bias = b.data[static_cast<size_t>(co)];
      T* row = y.ptr() + static_cast<size_t>(co) * plane;
      for (int64_t i = 0; i < plane; ++i) row[i] += bias;
    }
    return y;
  }

  TensorT<T> forward(const TensorT<T>& x) const {
    std::vector<T> cols;
    return forward(x, cols);
  }

  // Accumulates parameter gradients and returns the input gradient. The
  // patch matrix is recomputed from x rather than cached forward-side.
  TensorT<T> backward(const TensorT<T>& x, const TensorT<T>& dy) {
    int oh = dy.height(), ow = dy.width();
    const int kk = in_channels * kernel * kernel;
    std::vector<T> cols;
    im2col(x, kernel, stride, pad, oh, ow, cols);

    ConstMatMap<T> dym(dy.ptr(), out_channels, static_cast<Eigen::Index>(oh) * ow);
    ConstMatMap<T> cm(cols.data(), kk, static_cast<Eigen::Index>(oh) * ow);
    MatMap<T> gwm(gw.ptr(), out_channels, kk);
    gwm.noalias() += dym * cm.transpose();
    // Bias gradient summed in a fixed order (Eigen's vectorized redux splits
    // at alignment boundaries, which would make results depend on where the
    // tensor happened to be allocated).
    const int64_t plane = static_cast<int64_t>(oh) * ow;
    for (int co = 0; co < out_channels; ++co) {
      const T* row = dy.ptr() + static_cast<size_t>(co) * plane;
      double acc = 0.0;
      for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(row[i]);
      gb.data[static_cast<size_t>(co)] += static_cast<T>(acc);
    }

    std::vector<T> dcols(static_cast<size_t>(kk) * oh * ow);
    ConstMatMap<T> wm(w.ptr(), out_channels, kk);
    MatMap<T> dcm(dcols.data(), kk, static_cast<Eigen::Index>(oh) * ow);
    dcm.noalias() = wm.transpose() * dym;

    TensorT<T> dx(x.shape);
    col2im_add(dcols, in_channels, x.height(), x.width(), kernel, stride, pad, oh, ow, dx);
    return dx;
  }

  void zero_grad() {
    gw.fill(T(0));
    gb.fill(T(0));
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
  }
};

template <typename T>
struct GroupNorm {
  int channels = 0, groups = 1;
  double eps = 1e-5;
  TensorT<T> gamma, beta, ggamma, gbeta;

  struct Cache {
    TensorT<T> xhat;              // normalized input
    std::vector<double> inv_std;  // one per group
  };

  GroupNorm() = default;

  GroupNorm(int channels_, int groups_) : channels(channels_), groups(groups_) {
    if (channels < 1 || groups < 1) throw ConfigError("bad group norm geometry");
    if (channels % groups != 0)
      throw ConfigError("channels " + std::to_string(channels) + " not divisible by groups " +
                        std::to_string(groups));
    gamma = TensorT<T>({channels});
    beta = TensorT<T>({channels});
    ggamma = TensorT<T>({channels});
    gbeta = TensorT<T>({channels});
    gamma.fill(T(1));
  }

  TensorT<T> forward(const TensorT<T>& x, Cache& cache) const {
    if (x.channels() != channels) throw DataError("group norm channel mismatch");
    const int H = x.height(), W = x.width();
    const int64_t plane = static_cast<int64_t>(H) * W;
    const int per_group = channels / groups;
    const int64_t gsize = per_group * plane;

    cache.xhat = TensorT<T>(x.shape);
    cache.inv_std.assign(static_cast<size_t>(groups), 0.0);
    TensorT<T> y(x.shape);

    for (int g = 0; g < groups; ++g) {
      const T* src = x.ptr() + static_cast<size_t>(g) * gsize;
      double mean = 0.0;
      for (int64_t i = 0; i < gsize; ++i) mean += static_cast<double>(src[i]);
      mean /= static_cast<double>(gsize);
      double var = 0.0;
      for (int64_t i = 0; i < gsize; ++i) {
        double d = static_cast<double>(src[i]) - mean;
        var += d * d;
      }
      var /= static_cast<double>(gsize);
      double inv = 1.0 / std::sqrt(var + eps);
      cache.inv_std[static_cast<size_t>(g)] = inv;

      T* xh = cache.xhat.ptr() + static_cast<size_t>(g) * gsize;
      T* dst = y.ptr() + static_cast<size_t>(g) * gsize;
      for (int c = 0; c < per_group; ++c) {
        int channel = g * per_group + c;
        double gam = static_cast<double>(gamma.data[static_cast<size_t>(channel)]);
        double bet = static_cast<double>(beta.data[static_cast<size_t>(channel)]);
        for (int64_t i = c * plane; i < (c + 1) * plane; ++i) {
          double v = (static_cast<double>(src[i]) - mean) * inv;
          xh[i] = static_cast<T>(v);
          dst[i] = static_cast<T>(gam * v + bet);
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, const Cache& cache) {
    const int H = dy.height(), W = dy.width();
    const int64_t plane = static_cast<int64_t>(H) * W;
    const int per_group = channels / groups;
    const int64_t gsize = per_group * plane;

    TensorT<T> dx(dy.shape);
    for (int g = 0; g < groups; ++g) {
      const T* dyp = dy.ptr() + static_cast<size_t>(g) * gsize;
      const T* xh = cache.xhat.ptr() + static_cast<size_t>(g) * gsize;
      double inv = cache.inv_std[static_cast<size_t>(g)];

      // Per-channel parameter gradients, then the group-wide reductions of
      // dxhat that the input gradient needs.
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      std::vector<double> gam(static_cast<size_t>(per_group));
      for (int c = 0; c < per_group; ++c) {
        int channel = g * per_group + c;
        gam[static_cast<size_t>(c)] = static_cast<double>(gamma.data[static_cast<size_t>(channel)]);
        double dg = 0.0, db = 0.0;
        for (int64_t i = c * plane; i < (c + 1) * plane; ++i) {
          double d = static_cast<double>(dyp[i]);
          double v = static_cast<double>(xh[i]);
          dg += d * v;
          db += d;
          double dxhat = d * gam[static_cast<size_t>(c)];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * v;
        }
        ggamma.data[static_cast<size_t>(channel)] += static_cast<T>(dg);
        gbeta.data[static_cast<size_t>(channel)] += static_cast<T>(db);
      }

      double mean_dxhat = sum_dxhat / static_cast<double>(gsize);
      double mean_dxhat_xhat = sum_dxhat_xhat / static_cast<double>(gsize);
      T* dst = dx.ptr() + static_cast<size_t>(g) * gsize;
      for (int c = 0; c < per_group; ++c) {
        double gc = gam[static_cast<size_t>(c)];
        for (int64_t i = c * plane; i < (c + 1) * plane; ++i) {
          double dxhat = static_cast<double>(dyp[i]) * gc;
          double v = static_cast<double>(xh[i]);
          dst[i] = static_cast<T>(inv * (dxhat - mean_dxhat - v * mean_dxhat_xhat));
        }
      }
    }
    return dx;
  }

  void zero_grad() {
    ggamma.fill(T(0));
    gbeta.fill(T(0));
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".gamma", &gamma, &ggamma});
    out.push_back({prefix + ".beta", &beta, &gbeta});
  }
};

// x * sigmoid(x), elementwise.
template <typename T>
TensorT<T> swish(const TensorT<T>& x) {
  TensorT<T> y(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) {
    double v = static_cast<double>(x.data[i]);
    double s = 1.0 / (1.0 + std::exp(-v));
    y.data[i] = static_cast<T>(v * s);
  }
  return y;
}

template <typename T>
TensorT<T> swish_backward(const TensorT<T>& x, const TensorT<T>& dy) {
  TensorT<T> dx(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) {
    double v = static_cast<double>(x.data[i]);
    double s = 1.0 / (1.0 + std::exp(-v));
    dx.data[i] = static_cast<T>(static_cast<double>(dy.data[i]) * (s * (1.0 + v * (1.0 - s))));
  }
  return dx;
}

// Corner-aligned bilinear resampling of [C,H,W] to [C,oh,ow]: source
// coordinates are y*(H-1)/(oh-1), so the four grid corners map exactly.
template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& x, int oh, int ow) {
  if (oh < 1 || ow < 1) throw ConfigError("resize target must be positive");
  const int C = x.channels(), H = x.height(), W = x.width();
  TensorT<T> y({C, oh, ow});

  double sy = oh > 1 ? static_cast<double>(H - 1) / (oh - 1) : 0.0;
  double sx = ow > 1 ? static_cast<double>(W - 1) / (ow - 1) : 0.0;
  for (int oy = 0; oy < oh; ++oy) {
    double fy = oy * sy;
    int y0 = std::min(static_cast<int>(fy), H - 1);
    int y1 = std::min(y0 + 1, H - 1);
    double wy = fy - y0;
    for (int ox = 0; ox < ow; ++ox) {
      double fx = ox * sx;
      int x0 = std::min(static_cast<int>(fx), W - 1);
      int x1 = std::min(x0 + 1, W - 1);
      double wx = fx - x0;
      for (int c = 0; c < C; ++c) {
        const T* p = x.ptr() + static_cast<size_t>(c) * H * W;
        double v00 = p[static_cast<size_t>(y0) * W + x0];
        double v01 = p[static_cast<size_t>(y0) * W + x1];
        double v10 = p[static_cast<size_t>(y1) * W + x0];
        double v11 = p[static_cast<size_t>(y1) * W + x1];
        double top = v00 + wx * (v01 - v00);
        double bot = v10 + wx * (v11 - v10);
        y.at(c, oy, ox) = static_cast<T>(top + wy * (bot - top));
      }
    }
  }
  return y;
}

// Adjoint of bilinear_resize: scatters dy [C,oh,ow] back to [C,ih,iw].
template <typename T>
TensorT<T> bilinear_resize_backward(const TensorT<T>& dy, int ih, int iw) {
  const int C = dy.channels(), oh = dy.height(), ow = dy.width();
  TensorT<T> dx({C, ih, iw});

  double sy = oh > 1 ? static_cast<double>(ih - 1) / (oh - 1) : 0.0;
  double sx = ow > 1 ? static_cast<double>(iw - 1) / (ow - 1) : 0.0;
  for (int oy = 0; oy < oh; ++oy) {
    double fy = oy * sy;
    int y0 = std::min(static_cast<int>(fy), ih - 1);
    int y1 = std::min(y0 + 1, ih - 1);
    double wy = fy - y0;
    for (int ox = 0; ox < ow; ++ox) {
      double fx = ox * sx;
      int x0 = std::min(static_cast<int>(fx), iw - 1);
      int x1 = std::min(x0 + 1, iw - 1);
      double wx = fx - x0;
      for (int c = 0; c < C; ++c) {
        double g = static_cast<double>(dy.at(c, oy, ox));
        T* p = dx.ptr() + static_cast<size_t>(c) * ih * iw;
        p[static_cast<size_t>(y0) * iw + x0] += static_cast<T>(g * (1 - wy) * (1 - wx));
        p[static_cast<size_t>(y0) * iw + x1] += static_cast<T>(g * (1 - wy) * wx);
        p[static_cast<size_t>(y1) * iw + x0] += static_cast<T>(g * wy * (1 - wx));
        p[static_cast<size_t>(y1) * iw + x1] += static_cast<T>(g * wy * wx);
      }
    }
  }
  return dx;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw DataError("concat spatial mismatch: " + a.shape_str() + " vs " + b.shape_str());
  TensorT<T> y({a.channels() + b.channels(), a.height(), a.width()});
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(), y.data.begin() + a.data.size());
  return y;
}

template <typename T>
void split_channels(const TensorT<T>& x, int c_first, TensorT<T>& a, TensorT<T>& b) {
  if (c_first < 0 || c_first > x.channels()) throw DataError("bad channel split point");
  a = TensorT<T>({c_first, x.height(), x.width()});
  b = TensorT<T>({x.channels() - c_first, x.height(), x.width()});
  std::copy(x.data.begin(), x.data.begin() + a.data.size(), a.data.begin());
  std::copy(x.data.begin() + a.data.size(), x.data.end(), b.data.begin());
}

// Order-sensitive FNV-1a over parameter names and raw value bytes; used to
// certify that two networks carry identical weights.
template <typename T>
uint64_t params_hash(const std::vector<ParamRef<T>>& params) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, size_t n) {
    const unsigned char* bytes = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params) {
    mix(p.name.data(), p.name.size());
    mix(p.value->data.data(), p.value->data.size() * sizeof(T));
  }
  return h;
}

template <typename T>
void scale_grads(const std::vector<ParamRef<T>>& params, double s) {
  for (const auto& p : params)
    for (auto& g : p.grad->data) g = static_cast<T>(static_cast<double>(g) * s);
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  if (!same_shape(a, b))
    throw DataError("add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  TensorT<T> y(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) y.data[i] = a.data[i] + b.data[i];
  return y;
}

template <typename T>
void add_inplace(TensorT<T>& a, const TensorT<T>& b) {
  if (!same_shape(a, b))
    throw DataError("add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace latcomp::nn
