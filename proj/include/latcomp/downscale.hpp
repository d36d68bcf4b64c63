#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "latcomp/codec.hpp"
#include "latcomp/configs.hpp"
#include "latcomp/grid.hpp"
#include "latcomp/nn/unet.hpp"

namespace latcomp {

// Per-channel bilinear resampling (corner-aligned) with the geographic
// extent carried over; only the cell spacing changes.
GridField bilinear_resize(const GridField& field, int height, int width);

// Stacks the named channels from one or more co-registered fields into a
// single z-scored tensor, in exactly the supplied order. Every name must be
// found somewhere in `parts` and have stats available.
nn::Tensor assemble_input(const std::vector<GridField>& parts,
                          const std::vector<std::string>& order, const NormStats& stats);

// Stable hash of a channel ordering, recorded in model provenance so a
// stored model can prove which input layout it was trained against.
uint64_t channel_order_hash(const std::vector<std::string>& order);

// One training example: a coarse multi-channel forecast and the fine-grid
// truth for the target variable.
struct PairSample {
  GridField low;
  GridField high;
};

struct DownscalerModel {
  UNetConfig config;
  std::string target_space;  // "latent" or "raw"
  std::string target_variable;
  std::vector<std::string> input_order;
  NormStats input_stats;
  NormStats target_stats;  // raw mode only; latent targets stay in latent units
  nn::UNet<float> net;
  std::vector<TrainRecord> history;
  std::map<std::string, std::string> provenance;
  int upscale_factor = 8;  // truth dims / input dims
  int raw_patch = 256;
  BlendMode raw_blend = BlendMode::feather;

  // Model identity: architecture AND weights, so two training runs with the
  // same config never pass for each other.
  uint64_t fingerprint() const;
};

// Supervised training of the downscaling network.
//   latent mode: targets are the posterior means of the frozen codec applied
//     to the truth fields, and the network runs on the codec's latent grid.
//   raw mode: targets are z-scored truth tiles of side sched.raw_patch, and
//     the network runs at the full output resolution tile by tile.
DownscalerModel train_downscaler(const UNetConfig& cfg, const DownscaleSchedule& sched,
                                 const std::vector<PairSample>& pairs,
                                 const std::string& target_space,
                                 const std::string& target_variable, const CodecModel* codec,
                                 const std::function<void(const TrainRecord&)>& on_epoch = nullptr);

// Runs the model on one coarse input and returns the fine-grid prediction
// in physical units. Latent mode decodes through the supplied codec.
GridField downscale(const DownscalerModel& model, const GridField& low, const CodecModel* codec);

// Training-free reference: bilinear interpolation of the target channel up
// to the requested grid.
GridField interp_baseline(const GridField& low, const std::string& variable, int height,
                          int width);

// Patch-seam diagnostic: the worst per-line mean gradient across the given
// patch boundaries, against the 99.9th percentile of per-pixel interior
// gradients. spike means a boundary line exceeds that percentile.
struct SeamReport {
  double boundary_max = 0.0;
  double interior_p999 = 0.0;
  bool spike = false;
  int boundary_lines = 0;
};
SeamReport seam_check(const GridField& field, const std::string& variable, int patch_h,
                      int patch_w);

}  // namespace latcomp
