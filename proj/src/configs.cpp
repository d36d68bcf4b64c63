#include "latcomp/configs.hpp"

#include "json.hpp"
#include "latcomp/errors.hpp"
#include "latcomp/nn/rng.hpp"

namespace latcomp {

using nlohmann::json;

namespace {

json parse_object(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ConfigError(std::string("malformed ") + what + " JSON");
  return j;
}

}  // namespace

void CodecConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (latent_channels < 1) throw ConfigError("latent_channels must be >= 1");
  if (res_blocks_per_stage < 1) throw ConfigError("res_blocks_per_stage must be >= 1");
  if (downsample_stages < 0) throw ConfigError("downsample_stages must be >= 0");
  if (norm_groups < 1) throw ConfigError("norm_groups must be >= 1");
  if (stage_channels.size() != static_cast<size_t>(downsample_stages) + 1)
    throw ConfigError("stage_channels must list downsample_stages + 1 widths, got " +
                      std::to_string(stage_channels.size()));
  if (base_channels != stage_channels.front())
    throw ConfigError("base_channels must equal the first stage width");
  for (int c : stage_channels) {
    if (c < 1) throw ConfigError("stage widths must be positive");
    if (c % norm_groups != 0)
      throw ConfigError("stage width " + std::to_string(c) + " is not divisible by norm_groups " +
                        std::to_string(norm_groups));
  }
  if (!(charbonnier_eps > 0.0)) throw ConfigError("charbonnier_eps must be positive");
  if (kl_weight < 0.0) throw ConfigError("kl_weight must be non-negative");
  if (recon_loss != "charbonnier" && recon_loss != "charbonnier_global" && recon_loss != "l1")
    throw ConfigError("unknown reconstruction loss '" + recon_loss + "'");
}

std::string CodecConfig::to_json() const {
  json j{{"in_channels", in_channels},
         {"base_channels", base_channels},
         {"stage_channels", stage_channels},
         {"res_blocks_per_stage", res_blocks_per_stage},
         {"latent_channels", latent_channels},
         {"downsample_stages", downsample_stages},
         {"norm_groups", norm_groups},
         {"charbonnier_eps", charbonnier_eps},
         {"kl_weight", kl_weight},
         {"recon_loss", recon_loss}};
  return j.dump();
}

CodecConfig CodecConfig::from_json(const std::string& text) {
  json j = parse_object(text, "codec config");
  CodecConfig c;
  try {
    c.in_channels = j.value("in_channels", c.in_channels);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.stage_channels = j.value("stage_channels", c.stage_channels);
    c.res_blocks_per_stage = j.value("res_blocks_per_stage", c.res_blocks_per_stage);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.downsample_stages = j.value("downsample_stages", c.downsample_stages);
    c.norm_groups = j.value("norm_groups", c.norm_groups);
    c.charbonnier_eps = j.value("charbonnier_eps", c.charbonnier_eps);
    c.kl_weight = j.value("kl_weight", c.kl_weight);
    c.recon_loss = j.value("recon_loss", c.recon_loss);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad codec config field: ") + e.what());
  }
  c.validate();
  return c;
}

uint64_t CodecConfig::fingerprint() const { return nn::hash_name(to_json()); }

void TrainSchedule::validate() const {
  if (pretrain.patch < 1 || finetune.patch < 1) throw ConfigError("patch sizes must be >= 1");
  if (pretrain.epochs < 0 || finetune.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (pretrain.epochs + finetune.epochs < 1) throw ConfigError("schedule trains for zero epochs");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (optimizer != "adam") throw ConfigError("unknown optimizer '" + optimizer + "'");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
}

std::string TrainSchedule::to_json() const {
  json j{{"pretrain", {{"patch", pretrain.patch}, {"epochs", pretrain.epochs}}},
         {"finetune", {{"patch", finetune.patch}, {"epochs", finetune.epochs}}},
         {"batch_size", batch_size},
         {"learning_rate", learning_rate},
         {"optimizer", optimizer},
         {"seed", seed},
         {"checkpoint_every", checkpoint_every},
         {"checkpoint_dir", checkpoint_dir}};
  return j.dump();
}

TrainSchedule TrainSchedule::from_json(const std::string& text) {
  json j = parse_object(text, "train schedule");
  TrainSchedule s;
  try {
    if (j.contains("pretrain")) {
      s.pretrain.patch = j["pretrain"].value("patch", s.pretrain.patch);
      s.pretrain.epochs = j["pretrain"].value("epochs", s.pretrain.epochs);
    }
    if (j.contains("finetune")) {
      s.finetune.patch = j["finetune"].value("patch", s.finetune.patch);
      s.finetune.epochs = j["finetune"].value("epochs", s.finetune.epochs);
    }
    s.batch_size = j.value("batch_size", s.batch_size);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.optimizer = j.value("optimizer", s.optimizer);
    s.seed = j.value("seed", s.seed);
    s.checkpoint_every = j.value("checkpoint_every", s.checkpoint_every);
    s.checkpoint_dir = j.value("checkpoint_dir", s.checkpoint_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train schedule field: ") + e.what());
  }
  s.validate();
  return s;
}

void UNetConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (out_channels < 1) throw ConfigError("out_channels must be >= 1");
  if (stages < 1) throw ConfigError("stages must be >= 1");
  if (res_blocks_per_stage < 1) throw ConfigError("res_blocks_per_stage must be >= 1");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (norm_groups < 1) throw ConfigError("norm_groups must be >= 1");
  for (int s = 0; s < stages; ++s)
    if (stage_width(s) % norm_groups != 0)
      throw ConfigError("stage width " + std::to_string(stage_width(s)) +
                        " is not divisible by norm_groups " + std::to_string(norm_groups));
}

std::string UNetConfig::to_json() const {
  json j{{"in_channels", in_channels},
         {"stages", stages},
         {"res_blocks_per_stage", res_blocks_per_stage},
         {"base_channels", base_channels},
         {"out_channels", out_channels},
         {"skip_connections", skip_connections},
         {"norm_groups", norm_groups}};
  return j.dump();
}

UNetConfig UNetConfig::from_json(const std::string& text) {
  json j = parse_object(text, "unet config");
  UNetConfig c;
  try {
    c.in_channels = j.value("in_channels", c.in_channels);
    c.stages = j.value("stages", c.stages);
    c.res_blocks_per_stage = j.value("res_blocks_per_stage", c.res_blocks_per_stage);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
    c.skip_connections = j.value("skip_connections", c.skip_connections);
    c.norm_groups = j.value("norm_groups", c.norm_groups);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad unet config field: ") + e.what());
  }
  c.validate();
  return c;
}

uint64_t UNetConfig::fingerprint() const { return nn::hash_name(to_json()); }

void DownscaleSchedule::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (optimizer != "adam") throw ConfigError("unknown optimizer '" + optimizer + "'");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (raw_patch < 1) throw ConfigError("raw_patch must be >= 1");
}

std::string DownscaleSchedule::to_json() const {
  json j{{"batch_size", batch_size},
         {"epochs", epochs},
         {"learning_rate", learning_rate},
         {"optimizer", optimizer},
         {"seed", seed},
         {"checkpoint_every", checkpoint_every},
         {"checkpoint_dir", checkpoint_dir},
         {"raw_patch", raw_patch}};
  return j.dump();
}

DownscaleSchedule DownscaleSchedule::from_json(const std::string& text) {
  json j = parse_object(text, "downscale schedule");
  DownscaleSchedule s;
  try {
    s.batch_size = j.value("batch_size", s.batch_size);
    s.epochs = j.value("epochs", s.epochs);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.optimizer = j.value("optimizer", s.optimizer);
    s.seed = j.value("seed", s.seed);
    s.checkpoint_every = j.value("checkpoint_every", s.checkpoint_every);
    s.checkpoint_dir = j.value("checkpoint_dir", s.checkpoint_dir);
    s.raw_patch = j.value("raw_patch", s.raw_patch);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad downscale schedule field: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace latcomp
