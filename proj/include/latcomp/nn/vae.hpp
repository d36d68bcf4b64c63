#pragma once

#include <utility>

#include "latcomp/configs.hpp"
#include "latcomp/nn/blocks.hpp"

namespace latcomp::nn {

// log-variance is clamped to this range before exponentiation so the
// sampling path can never overflow.
inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 20.0;

// Analysis half of the autoencoder: a 1x1 stem, residual stages whose first
// block widens the channels, a stride-2 convolution after each of the first
// `downsample_stages` stages, and a 3x3 head emitting mean and log-variance
// planes. A 256x256 input with 3 downsampling stages maps to a 32x32 grid.
template <typename T>
struct VaeEncoder {
  Conv2d<T> stem;
  struct Stage {
    std::vector<ResBlock<T>> blocks;
    Conv2d<T> down;
    bool has_down = false;
  };
  std::vector<Stage> stages;
  Conv2d<T> head;
  int latent_channels = 0;

  struct Cache {
    TensorT<T> x;
    std::vector<std::vector<typename ResBlock<T>::Cache>> blocks;
    std::vector<TensorT<T>> down_in;
    TensorT<T> head_in;
    TensorT<T> raw_logvar;  // pre-clamp values, for the clamp mask
  };

  VaeEncoder() = default;

  VaeEncoder(const CodecConfig& cfg, Rng& rng) : latent_channels(cfg.latent_channels) {
    const auto& widths = cfg.stage_channels;
    stem = Conv2d<T>(cfg.in_channels, widths[0], 1, 1, 0, rng);
    stages.resize(widths.size());
    for (size_t s = 0; s < widths.size(); ++s) {
      int cin = s == 0 ? widths[0] : widths[s - 1];
      stages[s].blocks.reserve(static_cast<size_t>(cfg.res_blocks_per_stage));
      for (int b = 0; b < cfg.res_blocks_per_stage; ++b) {
        stages[s].blocks.emplace_back(b == 0 ? cin : widths[s], widths[s], cfg.norm_groups, rng);
      }
      if (s + 1 < widths.size()) {
        stages[s].down = Conv2d<T>(widths[s], widths[s], 3, 2, 1, rng);
        stages[s].has_down = true;
      }
    }
    head = Conv2d<T>(widths.back(), 2 * cfg.latent_channels, 3, 1, 1, rng);
  }

  std::pair<TensorT<T>, TensorT<T>> forward(const TensorT<T>& x, Cache& c) const {
    c.x = x;
    c.blocks.assign(stages.size(), {});
    c.down_in.assign(stages.size(), {});
    TensorT<T> h = stem.forward(x);
    for (size_t s = 0; s < stages.size(); ++s) {
      c.blocks[s].resize(stages[s].blocks.size());
      for (size_t b = 0; b < stages[s].blocks.size(); ++b)
        h = stages[s].blocks[b].forward(h, c.blocks[s][b]);
      if (stages[s].has_down) {
        c.down_in[s] = h;
        h = stages[s].down.forward(h);
      }
    }
    c.head_in = h;
    TensorT<T> both = head.forward(h);
    TensorT<T> mu, logvar;
    split_channels(both, latent_channels, mu, logvar);
    c.raw_logvar = logvar;
    for (auto& v : logvar.data) {
      if (v < static_cast<T>(kLogVarMin)) v = static_cast<T>(kLogVarMin);
      if (v > static_cast<T>(kLogVarMax)) v = static_cast<T>(kLogVarMax);
    }
    return {std::move(mu), std::move(logvar)};
  }

  TensorT<T> backward(const TensorT<T>& dmu, const TensorT<T>& dlogvar, const Cache& c) {
    TensorT<T> dlv = dlogvar;
    for (size_t i = 0; i < dlv.data.size(); ++i) {
      double raw = static_cast<double>(c.raw_logvar.data[i]);
      if (raw < kLogVarMin || raw > kLogVarMax) dlv.data[i] = T(0);
    }
    TensorT<T> dh = head.backward(c.head_in, concat_channels(dmu, dlv));
    for (size_t s = stages.size(); s-- > 0;) {
      if (stages[s].has_down) dh = stages[s].down.backward(c.down_in[s], dh);
      for (size_t b = stages[s].blocks.size(); b-- > 0;)
        dh = stages[s].blocks[b].backward(dh, c.blocks[s][b]);
    }
    return stem.backward(c.x, dh);
  }

  void zero_grad() {
    stem.zero_grad();
    for (auto& s : stages) {
      for (auto& b : s.blocks) b.zero_grad();
      if (s.has_down) s.down.zero_grad();
    }
    head.zero_grad();
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    stem.params(prefix + ".stem", out);
    for (size_t s = 0; s < stages.size(); ++s) {
      for (size_t b = 0; b < stages[s].blocks.size(); ++b)
        stages[s].blocks[b].params(prefix + ".s" + std::to_string(s) + ".b" + std::to_string(b),
                                   out);
      if (stages[s].has_down) stages[s].down.params(prefix + ".s" + std::to_string(s) + ".down", out);
    }
    head.params(prefix + ".head", out);
  }
};

// Synthesis half: a 3x3 head from the latent grid to the widest stage, the
// encoder stages mirrored in reverse, a corner-aligned bilinear 2x upsample
// at the end of the last `downsample_stages` stages, and a 3x3 output
// projection back to the data channels.
template <typename T>
struct VaeDecoder {
  Conv2d<T> head;
  struct Stage {
    std::vector<ResBlock<T>> blocks;
    bool upsample = false;
  };
  std::vector<Stage> stages;
  Conv2d<T> out;

  struct Cache {
    TensorT<T> z;
    std::vector<std::vector<typename ResBlock<T>::Cache>> blocks;
    std::vector<std::pair<int, int>> pre_up;  // dims before each upsample
    TensorT<T> out_in;
  };

  VaeDecoder() = default;

  VaeDecoder(const CodecConfig& cfg, Rng& rng) {
    std::vector<int> widths(cfg.stage_channels.rbegin(), cfg.stage_channels.rend());
    head = Conv2d<T>(cfg.latent_channels, widths[0], 3, 1, 1, rng);
    stages.resize(widths.size());
    size_t first_up = widths.size() - static_cast<size_t>(cfg.downsample_stages);
    for (size_t s = 0; s < widths.size(); ++s) {
      int cin = s == 0 ? widths[0] : widths[s - 1];
      for (int b = 0; b < cfg.res_blocks_per_stage; ++b)
        stages[s].blocks.emplace_back(b == 0 ? cin : widths[s], widths[s], cfg.norm_groups, rng);
      stages[s].upsample = s >= first_up;
    }
    out = Conv2d<T>(widths.back(), cfg.in_channels, 3, 1, 1, rng);
  }

  TensorT<T> forward(const TensorT<T>& z, Cache& c) const {
    c.z = z;
    c.blocks.assign(stages.size(), {});
    c.pre_up.assign(stages.size(), {0, 0});
    TensorT<T> h = head.forward(z);
    for (size_t s = 0; s < stages.size(); ++s) {
      c.blocks[s].resize(stages[s].blocks.size());
      for (size_t b = 0; b < stages[s].blocks.size(); ++b)
        h = stages[s].blocks[b].forward(h, c.blocks[s][b]);
      if (stages[s].upsample) {
        c.pre_up[s] = {h.height(), h.width()};
        h = bilinear_resize(h, 2 * h.height(), 2 * h.width());
      }
    }
    c.out_in = h;
    return out.forward(h);
  }

  TensorT<T> backward(const TensorT<T>& dy, const Cache& c) {
    TensorT<T> dh = out.backward(c.out_in, dy);
    for (size_t s = stages.size(); s-- > 0;) {
      if (stages[s].upsample)
        dh = bilinear_resize_backward(dh, c.pre_up[s].first, c.pre_up[s].second);
      for (size_t b = stages[s].blocks.size(); b-- > 0;)
        dh = stages[s].blocks[b].backward(dh, c.blocks[s][b]);
    }
    return head.backward(c.z, dh);
  }

  void zero_grad() {
    head.zero_grad();
    for (auto& s : stages)
      for (auto& b : s.blocks) b.zero_grad();
    out.zero_grad();
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out_params) {
    head.params(prefix + ".head", out_params);
    for (size_t s = 0; s < stages.size(); ++s)
      for (size_t b = 0; b < stages[s].blocks.size(); ++b)
        stages[s].blocks[b].params(prefix + ".s" + std::to_string(s) + ".b" + std::to_string(b),
                                   out_params);
    out.params(prefix + ".out", out_params);
  }
};

template <typename T>
struct VaeNet {
  VaeEncoder<T> enc;
  VaeDecoder<T> dec;

  VaeNet() = default;
  VaeNet(const CodecConfig& cfg, uint64_t init_seed) {
    cfg.validate();
    Rng rng(init_seed);
    enc = VaeEncoder<T>(cfg, rng);
    dec = VaeDecoder<T>(cfg, rng);
  }

  void zero_grad() {
    enc.zero_grad();
    dec.zero_grad();
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    enc.params("enc", out);
    dec.params("dec", out);
    return out;
  }
};

}  // namespace latcomp::nn
