#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "latcomp/configs.hpp"
#include "latcomp/grid.hpp"
#include "latcomp/nn/loss.hpp"
#include "latcomp/nn/vae.hpp"

namespace latcomp {

// Latent-grid shape produced by encoding an HxW field: each downsampling
// stage is a stride-2 convolution, so every stage takes the ceiling of half
// the previous size.
std::pair<int, int> latent_dims(const CodecConfig& cfg, int height, int width);

// Encoded field: posterior mean and log-variance on the latent grid, plus
// everything needed to restore the source field's identity.
struct LatentRepr {
  nn::Tensor mu;      // [latent_channels, lh, lw]
  nn::Tensor logvar;  // same shape
  int source_height = 0;
  int source_width = 0;
  std::vector<std::string> variables;
  std::pair<double, double> lat_range{-90.0, 90.0};
  std::pair<double, double> lon_range{0.0, 360.0};
  int64_t timestamp = 0;
  uint64_t codec_fingerprint = 0;
};

struct TrainRecord {
  int phase = 0;  // 1 = pretrain, 2 = fine-tune
  int epoch = 0;  // within the phase
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

struct CodecModel {
  CodecConfig config;
  NormStats stats;
  nn::VaeNet<float> net;
  std::vector<TrainRecord> history;
  std::map<std::string, std::string> provenance;

  // Model identity: architecture AND weights. Latents only decode through
  // the exact model that produced them, so a retrained codec with the same
  // config still gets a different fingerprint.
  uint64_t fingerprint() const;
};

// z = mu + exp(logvar/2) * eta with eta ~ N(0,1) drawn from rng. At
// logvar = -80 the noise term vanishes below float resolution, so z
// becomes mu bit for bit.
nn::Tensor reparameterize(const nn::Tensor& mu, const nn::Tensor& logvar, nn::Rng& rng);

template <typename T>
struct VaeLossValue {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

// Forward-only evaluation of the training objective (used by finite
// difference checks and held-out monitoring).
template <typename T>
VaeLossValue<T> vae_loss_value(const nn::VaeNet<T>& net, const nn::TensorT<T>& x,
                               const nn::TensorT<T>& eta, const CodecConfig& cfg) {
  typename nn::VaeEncoder<T>::Cache ec;
  typename nn::VaeDecoder<T>::Cache dc;
  auto [mu, logvar] = net.enc.forward(x, ec);
  if (!nn::same_shape(mu, eta))
    throw DataError("noise shape " + eta.shape_str() + " does not match latent " + mu.shape_str());
  nn::TensorT<T> z(mu.shape);
  for (size_t i = 0; i < z.data.size(); ++i) {
    double sigma = std::exp(0.5 * static_cast<double>(logvar.data[i]));
    z.data[i] = static_cast<T>(static_cast<double>(mu.data[i]) +
                               sigma * static_cast<double>(eta.data[i]));
  }
  nn::TensorT<T> xhat = net.dec.forward(z, dc);

  VaeLossValue<T> value;
  if (cfg.recon_loss == "l1") {
    value.recon = nn::l1_loss(xhat, x).value;
  } else if (cfg.recon_loss == "charbonnier_global") {
    value.recon = nn::charbonnier_global_loss(xhat, x, cfg.charbonnier_eps).value;
  } else {
    value.recon = nn::charbonnier_loss(xhat, x, cfg.charbonnier_eps).value;
  }
  value.kl = nn::kl_gaussian(mu, logvar).value;
  value.total = value.recon + cfg.kl_weight * value.kl;
  return value;
}

// Full training objective on one normalized sample: encode, sample the
// latent with the supplied noise tensor, decode, then reconstruction loss
// plus kl_weight times the Gaussian divergence. Accumulates parameter
// gradients on the network.
template <typename T>
VaeLossValue<T> vae_loss_backward(nn::VaeNet<T>& net, const nn::TensorT<T>& x,
                                  const nn::TensorT<T>& eta, const CodecConfig& cfg) {
  typename nn::VaeEncoder<T>::Cache ec;
  typename nn::VaeDecoder<T>::Cache dc;
  auto [mu, logvar] = net.enc.forward(x, ec);
  if (!nn::same_shape(mu, eta))
    throw DataError("noise shape " + eta.shape_str() + " does not match latent " + mu.shape_str());

  nn::TensorT<T> z(mu.shape);
  for (size_t i = 0; i < z.data.size(); ++i) {
    double sigma = std::exp(0.5 * static_cast<double>(logvar.data[i]));
    z.data[i] = static_cast<T>(static_cast<double>(mu.data[i]) +
                               sigma * static_cast<double>(eta.data[i]));
  }
  nn::TensorT<T> xhat = net.dec.forward(z, dc);

  nn::LossGrad<T> recon;
  if (cfg.recon_loss == "l1") {
    recon = nn::l1_loss(xhat, x);
  } else if (cfg.recon_loss == "charbonnier_global") {
    recon = nn::charbonnier_global_loss(xhat, x, cfg.charbonnier_eps);
  } else {
    recon = nn::charbonnier_loss(xhat, x, cfg.charbonnier_eps);
  }
  nn::KlGrad<T> kl = nn::kl_gaussian(mu, logvar);

  VaeLossValue<T> value;
  value.recon = recon.value;
  value.kl = kl.value;
  value.total = recon.value + cfg.kl_weight * kl.value;

  nn::TensorT<T> dz = net.dec.backward(recon.grad, dc);
  nn::TensorT<T> dmu(mu.shape), dlogvar(logvar.shape);
  for (size_t i = 0; i < dz.data.size(); ++i) {
    double sigma = std::exp(0.5 * static_cast<double>(logvar.data[i]));
    double g = static_cast<double>(dz.data[i]);
    dmu.data[i] = static_cast<T>(g + cfg.kl_weight * static_cast<double>(kl.dmu.data[i]));
    dlogvar.data[i] =
        static_cast<T>(0.5 * sigma * static_cast<double>(eta.data[i]) * g +
                       cfg.kl_weight * static_cast<double>(kl.dlogvar.data[i]));
  }
  net.enc.backward(dmu, dlogvar, ec);
  return value;
}

// Deterministic inference-path encode: z-scores the field with the model's
// stats and returns the posterior parameters. Field dims must be divisible
// by 2^downsample_stages.
LatentRepr encode(const CodecModel& model, const GridField& field);

// Decodes the posterior mean (or a sample when sample_seed is set) back to
// physical units. Refuses latents whose codec fingerprint does not match.
GridField decode(const CodecModel& model, const LatentRepr& latent);
GridField decode_sampled(const CodecModel& model, const LatentRepr& latent, uint64_t sample_seed);

// Round trip for evaluation: encode+decode, patching the field when its
// dims are not divisible (or larger than max_patch) with feathered blending.
GridField reconstruct(const CodecModel& model, const GridField& field, int max_patch = 512);

// Two-phase training. Fields are physical-unit samples whose channel count
// matches cfg.in_channels; normalization stats are fit here and stored on
// the model. A non-finite loss aborts with the last checkpoint path.
CodecModel train_vae(const CodecConfig& cfg, const TrainSchedule& sched,
                     const std::vector<GridField>& fields,
                     const std::function<void(const TrainRecord&)>& on_epoch = nullptr);

// History row formatting shared by checkpoints and the command line:
// "phase,epoch,loss,recon,kl" with full double precision.
std::string history_to_csv(const std::vector<TrainRecord>& history);
std::vector<TrainRecord> history_from_csv(const std::string& text);

}  // namespace latcomp
