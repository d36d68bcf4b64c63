#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace latcomp {

// Architecture of the convolutional autoencoder. stage_channels lists the
// encoder stage widths from the stem outward; the decoder mirrors them in
// reverse. The first downsample_stages encoder stages end in a stride-2
// convolution, so the latent grid is the input grid divided by
// 2^downsample_stages (ceil division on odd sizes).
struct CodecConfig {
  int in_channels = 1;
  int base_channels = 128;
  std::vector<int> stage_channels = {128, 256, 512, 512};
  int res_blocks_per_stage = 2;
  int latent_channels = 4;
  int downsample_stages = 3;
  int norm_groups = 32;
  double charbonnier_eps = 1e-3;
  double kl_weight = 1e-6;
  // "charbonnier": per-element sqrt(d^2+eps^2), averaged.
  // "charbonnier_global": one sqrt over the mean squared error.
  // "l1": mean absolute error.
  std::string recon_loss = "charbonnier";

  void validate() const;
  std::string to_json() const;
  static CodecConfig from_json(const std::string& text);
  uint64_t fingerprint() const;  // hash of the canonical serialized form
};

struct TrainPhase {
  int patch = 256;
  int epochs = 10;
};

// Two-phase codec training: a pretrain phase on small patches, then a
// fine-tune phase on larger ones. Set finetune.epochs = 0 to skip phase two.
struct TrainSchedule {
  TrainPhase pretrain{256, 10};
  TrainPhase finetune{1000, 5};
  int batch_size = 8;
  double learning_rate = 1.6e-5;
  std::string optimizer = "adam";
  uint64_t seed = 0;
  int checkpoint_every = 1;    // epochs between checkpoints
  std::string checkpoint_dir;  // empty disables checkpoint files

  void validate() const;
  std::string to_json() const;
  static TrainSchedule from_json(const std::string& text);
};

// Downscaling network: a U-Net with `stages` resolution levels whose widths
// double per level starting from base_channels. out_channels must match the
// training target space (latent channels, or one per predicted variable).
struct UNetConfig {
  int in_channels = 40;
  int stages = 4;
  int res_blocks_per_stage = 2;
  int base_channels = 64;
  int out_channels = 4;
  bool skip_connections = true;
  int norm_groups = 32;

  int stage_width(int stage) const { return base_channels << stage; }
  void validate() const;
  std::string to_json() const;
  static UNetConfig from_json(const std::string& text);
  uint64_t fingerprint() const;
};

struct DownscaleSchedule {
  int batch_size = 16;
  int epochs = 50;
  double learning_rate = 3.2e-5;
  std::string optimizer = "adam";
  uint64_t seed = 0;
  int checkpoint_every = 10;   // epochs between checkpoints
  std::string checkpoint_dir;  // empty disables checkpoint files
  int raw_patch = 256;         // truth patch size for raw-space training

  void validate() const;
  std::string to_json() const;
  static DownscaleSchedule from_json(const std::string& text);
};

}  // namespace latcomp
