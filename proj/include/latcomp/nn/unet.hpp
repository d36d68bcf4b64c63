#pragma once

#include <utility>

#include "latcomp/configs.hpp"
#include "latcomp/nn/blocks.hpp"

namespace latcomp::nn {

// Encoder-decoder with skip connections. Each of the `stages` resolution
// levels doubles the channel width; level s runs at 1/2^s of the input
// resolution, so the input dims must be divisible by 2^(stages-1). The
// decoder upsamples bilinearly and, when skips are enabled, concatenates
// the matching encoder activation before its residual blocks.
template <typename T>
struct UNet {
  UNetConfig cfg;
  Conv2d<T> stem;

  struct EncLevel {
    std::vector<ResBlock<T>> blocks;
    Conv2d<T> down;
  };
  std::vector<EncLevel> enc;             // levels 0 .. stages-2
  std::vector<ResBlock<T>> bottleneck;   // level stages-1
  struct DecLevel {
    std::vector<ResBlock<T>> blocks;
  };
  std::vector<DecLevel> dec;  // deepest level first
  Conv2d<T> out;

  struct Cache {
    TensorT<T> x;
    std::vector<std::vector<typename ResBlock<T>::Cache>> enc_blocks;
    std::vector<TensorT<T>> skip;     // encoder level outputs (down conv inputs)
    std::vector<typename ResBlock<T>::Cache> mid_blocks;
    std::vector<std::pair<int, int>> pre_up;  // dims before each decoder upsample
    std::vector<std::vector<typename ResBlock<T>::Cache>> dec_blocks;
    TensorT<T> out_in;
  };

  UNet() = default;

  UNet(const UNetConfig& config, uint64_t init_seed) : cfg(config) {
    cfg.validate();
    Rng rng(init_seed);
    stem = Conv2d<T>(cfg.in_channels, cfg.stage_width(0), 3, 1, 1, rng);
    enc.resize(static_cast<size_t>(cfg.stages - 1));
    for (int s = 0; s + 1 < cfg.stages; ++s) {
      int w = cfg.stage_width(s);
      int cin = s == 0 ? cfg.stage_width(0) : cfg.stage_width(s - 1);
      for (int b = 0; b < cfg.res_blocks_per_stage; ++b)
        enc[static_cast<size_t>(s)].blocks.emplace_back(b == 0 ? cin : w, w, cfg.norm_groups, rng);
      enc[static_cast<size_t>(s)].down = Conv2d<T>(w, w, 3, 2, 1, rng);
    }
    int deep_in = cfg.stages == 1 ? cfg.stage_width(0) : cfg.stage_width(cfg.stages - 2);
    int deep = cfg.stage_width(cfg.stages - 1);
    for (int b = 0; b < cfg.res_blocks_per_stage; ++b)
      bottleneck.emplace_back(b == 0 ? deep_in : deep, deep, cfg.norm_groups, rng);

    dec.resize(static_cast<size_t>(cfg.stages - 1));
    for (int s = cfg.stages - 2; s >= 0; --s) {
      int w = cfg.stage_width(s);
      int up_in = cfg.stage_width(s + 1) + (cfg.skip_connections ? w : 0);
      auto& level = dec[static_cast<size_t>(cfg.stages - 2 - s)];
      for (int b = 0; b < cfg.res_blocks_per_stage; ++b)
        level.blocks.emplace_back(b == 0 ? up_in : w, w, cfg.norm_groups, rng);
    }
    out = Conv2d<T>(cfg.stage_width(0), cfg.out_channels, 3, 1, 1, rng);
  }

  void check_dims(const TensorT<T>& x) const {
    int div = 1 << (cfg.stages - 1);
    if (x.height() % div != 0 || x.width() % div != 0)
      throw DataError("input " + x.shape_str() + " not divisible by " + std::to_string(div) +
                      " for " + std::to_string(cfg.stages) + " resolution levels");
  }

  TensorT<T> forward(const TensorT<T>& x, Cache& c) const {
    check_dims(x);
    c.x = x;
    c.enc_blocks.assign(enc.size(), {});
    c.skip.assign(enc.size(), {});
    c.mid_blocks.resize(bottleneck.size());
    c.pre_up.assign(dec.size(), {0, 0});
    c.dec_blocks.assign(dec.size(), {});

    TensorT<T> h = stem.forward(x);
    for (size_t s = 0; s < enc.size(); ++s) {
      c.enc_blocks[s].resize(enc[s].blocks.size());
      for (size_t b = 0; b < enc[s].blocks.size(); ++b)
        h = enc[s].blocks[b].forward(h, c.enc_blocks[s][b]);
      c.skip[s] = h;
      h = enc[s].down.forward(h);
    }
    for (size_t b = 0; b < bottleneck.size(); ++b) h = bottleneck[b].forward(h, c.mid_blocks[b]);

    for (size_t i = 0; i < dec.size(); ++i) {
      size_t s = enc.size() - 1 - i;  // matching encoder level
      c.pre_up[i] = {h.height(), h.width()};
      h = bilinear_resize(h, 2 * h.height(), 2 * h.width());
      if (cfg.skip_connections) h = concat_channels(h, c.skip[s]);
      c.dec_blocks[i].resize(dec[i].blocks.size());
      for (size_t b = 0; b < dec[i].blocks.size(); ++b)
        h = dec[i].blocks[b].forward(h, c.dec_blocks[i][b]);
    }
    c.out_in = h;
    return out.forward(h);
  }

  TensorT<T> backward(const TensorT<T>& dy, const Cache& c) {
    TensorT<T> dh = out.backward(c.out_in, dy);
    std::vector<TensorT<T>> dskip(enc.size());

    for (size_t i = dec.size(); i-- > 0;) {
      size_t s = enc.size() - 1 - i;
      for (size_t b = dec[i].blocks.size(); b-- > 0;)
        dh = dec[i].blocks[b].backward(dh, c.dec_blocks[i][b]);
      if (cfg.skip_connections) {
        TensorT<T> dup;
        split_channels(dh, dh.channels() - c.skip[s].channels(), dup, dskip[s]);
        dh = std::move(dup);
      }
      dh = bilinear_resize_backward(dh, c.pre_up[i].first, c.pre_up[i].second);
    }

    for (size_t b = bottleneck.size(); b-- > 0;) dh = bottleneck[b].backward(dh, c.mid_blocks[b]);

    for (size_t s = enc.size(); s-- > 0;) {
      dh = enc[s].down.backward(c.skip[s], dh);
      if (cfg.skip_connections) add_inplace(dh, dskip[s]);
      for (size_t b = enc[s].blocks.size(); b-- > 0;)
        dh = enc[s].blocks[b].backward(dh, c.enc_blocks[s][b]);
    }
    return stem.backward(c.x, dh);
  }

  void zero_grad() {
    stem.zero_grad();
    for (auto& level : enc) {
      for (auto& b : level.blocks) b.zero_grad();
      level.down.zero_grad();
    }
    for (auto& b : bottleneck) b.zero_grad();
    for (auto& level : dec)
      for (auto& b : level.blocks) b.zero_grad();
    out.zero_grad();
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> result;
    stem.params("stem", result);
    for (size_t s = 0; s < enc.size(); ++s) {
      for (size_t b = 0; b < enc[s].blocks.size(); ++b)
        enc[s].blocks[b].params("enc.s" + std::to_string(s) + ".b" + std::to_string(b), result);
      enc[s].down.params("enc.s" + std::to_string(s) + ".down", result);
    }
    for (size_t b = 0; b < bottleneck.size(); ++b)
      bottleneck[b].params("mid.b" + std::to_string(b), result);
    for (size_t i = 0; i < dec.size(); ++i)
      for (size_t b = 0; b < dec[i].blocks.size(); ++b)
        dec[i].blocks[b].params("dec.s" + std::to_string(i) + ".b" + std::to_string(b), result);
    out.params("out", result);
    return result;
  }
};

}  // namespace latcomp::nn
