#include "latcomp/codec.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "latcomp/checkpoint.hpp"
#include "latcomp/nn/adam.hpp"

namespace latcomp {

std::pair<int, int> latent_dims(const CodecConfig& cfg, int height, int width) {
  if (height < 1 || width < 1) throw DataError("field dims must be positive");
  int lh = height, lw = width;
  for (int s = 0; s < cfg.downsample_stages; ++s) {
    lh = (lh + 1) / 2;
    lw = (lw + 1) / 2;
  }
  return {lh, lw};
}

nn::Tensor reparameterize(const nn::Tensor& mu, const nn::Tensor& logvar, nn::Rng& rng) {
  if (!nn::same_shape(mu, logvar))
    throw DataError("reparameterize shape mismatch: " + mu.shape_str() + " vs " +
                    logvar.shape_str());
  nn::Tensor z(mu.shape);
  for (size_t i = 0; i < z.data.size(); ++i) {
    float sigma = std::exp(0.5f * logvar.data[i]);
    z.data[i] = mu.data[i] + sigma * static_cast<float>(rng.normal());
  }
  return z;
}

namespace {

int downsample_factor(const CodecConfig& cfg) { return 1 << cfg.downsample_stages; }

void check_encodable(const CodecModel& model, const GridField& field) {
  field.validate();
  if (field.channels() != model.config.in_channels)
    throw DataError("field has " + std::to_string(field.channels()) + " channels, codec expects " +
                    std::to_string(model.config.in_channels));
  int div = downsample_factor(model.config);
  if (field.height() % div != 0 || field.width() % div != 0)
    throw DataError("field " + std::to_string(field.height()) + "x" +
                    std::to_string(field.width()) + " not divisible by " + std::to_string(div) +
                    "; patch it first");
}

GridField decode_tensor(const CodecModel& model, const LatentRepr& latent, const nn::Tensor& z) {
  typename nn::VaeDecoder<float>::Cache cache;
  nn::Tensor y = model.net.dec.forward(z, cache);

  GridField out;
  out.values = std::move(y);
  out.variables = latent.variables;
  out.lat_range = latent.lat_range;
  out.lon_range = latent.lon_range;
  out.timestamp = latent.timestamp;
  if (out.height() != latent.source_height || out.width() != latent.source_width)
    throw DataError("decoded grid " + std::to_string(out.height()) + "x" +
                    std::to_string(out.width()) + " does not match the recorded source dims");
  return zscore_invert(out, model.stats);
}

}  // namespace

uint64_t CodecModel::fingerprint() const {
  // params() hands out mutable gradient pointers, but the hash only reads
  // the weight values.
  auto params = const_cast<CodecModel*>(this)->net.params();
  return nn::mix_seed(config.fingerprint(), nn::params_hash(params));
}

LatentRepr encode(const CodecModel& model, const GridField& field) {
  check_encodable(model, field);
  GridField norm = zscore_apply(field, model.stats);

  typename nn::VaeEncoder<float>::Cache cache;
  auto [mu, logvar] = model.net.enc.forward(norm.values, cache);

  LatentRepr latent;
  latent.mu = std::move(mu);
  latent.logvar = std::move(logvar);
  latent.source_height = field.height();
  latent.source_width = field.width();
  latent.variables = field.variables;
  latent.lat_range = field.lat_range;
  latent.lon_range = field.lon_range;
  latent.timestamp = field.timestamp;
  latent.codec_fingerprint = model.fingerprint();
  return latent;
}

GridField decode(const CodecModel& model, const LatentRepr& latent) {
  if (latent.codec_fingerprint != 0 && latent.codec_fingerprint != model.fingerprint())
    throw IntegrityError("latent was produced by a different codec model");
  return decode_tensor(model, latent, latent.mu);
}

GridField decode_sampled(const CodecModel& model, const LatentRepr& latent, uint64_t sample_seed) {
  if (latent.codec_fingerprint != 0 && latent.codec_fingerprint != model.fingerprint())
    throw IntegrityError("latent was produced by a different codec model");
  nn::Rng rng(sample_seed);
  return decode_tensor(model, latent, reparameterize(latent.mu, latent.logvar, rng));
}

GridField reconstruct(const CodecModel& model, const GridField& field, int max_patch) {
  field.validate();
  int div = downsample_factor(model.config);
  if (max_patch < div) throw ConfigError("max_patch smaller than the downsampling factor");

  auto round_trip = [&](const GridField& f) {
    return decode(model, encode(model, f));
  };

  if (field.height() % div == 0 && field.width() % div == 0 && field.height() <= max_patch &&
      field.width() <= max_patch)
    return round_trip(field);

  auto pick_patch = [&](int length) {
    int p = std::min(max_patch, length);
    p -= p % div;
    if (p < div)
      throw DataError("field dimension " + std::to_string(length) +
                      " shorter than one downsampling block");
    return p;
  };
  int ph = pick_patch(field.height());
  int pw = pick_patch(field.width());

  PatchSet patches = patchify(field, ph, pw);
  for (auto& patch : patches.patches) {
    GridField pf;
    pf.values = std::move(patch.values);
    pf.variables = field.variables;
    pf.lat_range = field.lat_range;
    pf.lon_range = field.lon_range;
    pf.timestamp = field.timestamp;
    patch.values = round_trip(pf).values;
  }
  return unpatchify(patches, BlendMode::feather);
}

namespace {

std::vector<nn::Tensor> collect_patches(const std::vector<GridField>& fields, int patch) {
  std::vector<nn::Tensor> out;
  for (const auto& f : fields) {
    if (f.height() < patch || f.width() < patch)
      throw ConfigError("patch " + std::to_string(patch) + " exceeds field " +
                        std::to_string(f.height()) + "x" + std::to_string(f.width()));
    PatchSet set = patchify(f, patch, patch);
    for (auto& p : set.patches) out.push_back(std::move(p.values));
  }
  return out;
}

}  // namespace

CodecModel train_vae(const CodecConfig& cfg, const TrainSchedule& sched,
                     const std::vector<GridField>& fields,
                     const std::function<void(const TrainRecord&)>& on_epoch) {
  cfg.validate();
  sched.validate();
  if (fields.empty()) throw DataError("no training fields");
  int div = 1 << cfg.downsample_stages;
  for (const TrainPhase* phase : {&sched.pretrain, &sched.finetune}) {
    if (phase->epochs > 0 && phase->patch % div != 0)
      throw ConfigError("patch size " + std::to_string(phase->patch) + " not divisible by " +
                        std::to_string(div));
  }
  for (size_t i = 0; i < fields.size(); ++i) {
    fields[i].validate();
    if (fields[i].channels() != cfg.in_channels)
      throw DataError("training field " + std::to_string(i) + " has " +
                      std::to_string(fields[i].channels()) + " channels, config expects " +
                      std::to_string(cfg.in_channels));
  }

  CodecModel model;
  model.config = cfg;
  model.stats = zscore_fit(fields, fields.front().variables);
  model.net = nn::VaeNet<float>(cfg, nn::mix_seed(sched.seed, nn::hash_name("init")));

  std::vector<GridField> normalized;
  normalized.reserve(fields.size());
  for (const auto& f : fields) normalized.push_back(zscore_apply(f, model.stats));

  auto params = model.net.params();
  nn::Adam<float> opt(params, sched.learning_rate);

  std::string last_checkpoint;
  char buf[64];

  auto run_phase = [&](int phase_id, const TrainPhase& phase) {
    if (phase.epochs == 0) return;
    std::vector<nn::Tensor> patches = collect_patches(normalized, phase.patch);
    auto [lh, lw] = latent_dims(cfg, phase.patch, phase.patch);
    std::vector<int> latent_shape{cfg.latent_channels, lh, lw};

    for (int epoch = 0; epoch < phase.epochs; ++epoch) {
      uint64_t epoch_key =
          nn::mix_seed(nn::mix_seed(sched.seed, static_cast<uint64_t>(phase_id) << 32 |
                                                    static_cast<uint64_t>(epoch)),
                       nn::hash_name("epoch"));
      nn::Rng shuffle_rng(nn::mix_seed(epoch_key, nn::hash_name("shuffle")));
      nn::Rng noise_rng(nn::mix_seed(epoch_key, nn::hash_name("noise")));

      std::vector<size_t> order(patches.size());
      std::iota(order.begin(), order.end(), size_t{0});
      shuffle_rng.shuffle(order);

      double sum_total = 0.0, sum_recon = 0.0, sum_kl = 0.0;
      size_t cursor = 0;
      while (cursor < order.size()) {
        size_t batch_n = std::min(static_cast<size_t>(sched.batch_size), order.size() - cursor);
        model.net.zero_grad();
        for (size_t b = 0; b < batch_n; ++b) {
          const nn::Tensor& x = patches[order[cursor + b]];
          nn::Tensor eta(latent_shape);
          for (auto& v : eta.data) v = static_cast<float>(noise_rng.normal());
          auto value = vae_loss_backward(model.net, x, eta, cfg);
          if (!std::isfinite(value.total))
            throw TrainAbort("non-finite loss in phase " + std::to_string(phase_id) + " epoch " +
                                 std::to_string(epoch),
                             last_checkpoint);
          sum_total += value.total;
          sum_recon += value.recon;
          sum_kl += value.kl;
        }
        nn::scale_grads(params, 1.0 / static_cast<double>(batch_n));
        opt.step();
        cursor += batch_n;
      }

      TrainRecord rec;
      rec.phase = phase_id;
      rec.epoch = epoch;
      rec.loss = sum_total / static_cast<double>(order.size());
      rec.recon = sum_recon / static_cast<double>(order.size());
      rec.kl = sum_kl / static_cast<double>(order.size());
      model.history.push_back(rec);
      if (on_epoch) on_epoch(rec);

      if (!sched.checkpoint_dir.empty() && (epoch + 1) % sched.checkpoint_every == 0) {
        std::filesystem::create_directories(sched.checkpoint_dir);
        std::string path = sched.checkpoint_dir + "/codec_p" + std::to_string(phase_id) + "_e" +
                           std::to_string(epoch) + ".ckpt";
        save_codec_checkpoint(model, path);
        last_checkpoint = path;
      }
    }
  };

  std::snprintf(buf, sizeof(buf), "%" PRIu64, sched.seed);
  model.provenance["seed"] = buf;
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, model.fingerprint());
  model.provenance["config_fingerprint"] = buf;

  run_phase(1, sched.pretrain);
  // The fine-tune phase continues from the pretrained weights in place; the
  // hash recorded at the boundary certifies under both keys that nothing
  // reinitialized between the phases.
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, nn::params_hash(params));
  model.provenance["phase1_final_params"] = buf;
  model.provenance["phase2_initial_params"] = buf;
  run_phase(2, sched.finetune);

  return model;
}

std::string history_to_csv(const std::vector<TrainRecord>& history) {
  std::string out = "phase,epoch,loss,recon,kl\n";
  char buf[160];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g\n", r.phase, r.epoch, r.loss, r.recon,
                  r.kl);
    out += buf;
  }
  return out;
}

std::vector<TrainRecord> history_from_csv(const std::string& text) {
  std::vector<TrainRecord> out;
  size_t pos = text.find('\n');
  if (pos == std::string::npos) throw IoError("malformed history CSV");
  while (pos != std::string::npos && pos + 1 < text.size()) {
    size_t end = text.find('\n', pos + 1);
    std::string line = text.substr(pos + 1, end == std::string::npos ? end : end - pos - 1);
    pos = end;
    if (line.empty()) continue;
    TrainRecord r;
    if (std::sscanf(line.c_str(), "%d,%d,%lg,%lg,%lg", &r.phase, &r.epoch, &r.loss, &r.recon,
                    &r.kl) != 5)
      throw IoError("malformed history row: " + line);
    out.push_back(r);
  }
  return out;
}

}  // namespace latcomp
