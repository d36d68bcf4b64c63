#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "latcomp/configs.hpp"

namespace latcomp {

// Experiment presets selectable with `preset = NAME` or --preset. Baselines
// (resize, down_inter) need no training; the others pick a model family and
// loss, with every hyperparameter still overridable in the config file.
const std::vector<std::string>& known_presets();

// One experiment's settings, parsed from a human-editable key-value file
// with nested [section] headers:
//
//   preset = vae_finetune
//   seed = 42
//
//   [data]
//   kind = synthetic
//   count = 500
//
//   [codec.schedule]
//   batch_size = 8
//
// Keys are stored flat as "section.key". Comments are full lines starting
// with '#' or ';'. serialize() emits a canonical sorted form, so
// parse(serialize(c)) reproduces c exactly and serializing again yields the
// same bytes (a fixed point).
struct RunConfig {
  std::map<std::string, std::string> values;

  static RunConfig parse(const std::string& text);
  static RunConfig parse_file(const std::string& path);
  std::string serialize() const;

  bool has(const std::string& key) const;
  // Missing key throws ConfigError; the fallback overloads do not.
  std::string get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;
  void set(const std::string& key, const std::string& value);

  std::string preset() const { return get("preset", ""); }
  uint64_t seed() const;
  bool deterministic() const;
  std::string out_dir() const { return get("out", ""); }

  // Fills in the selected preset's defaults without overwriting anything
  // already set, so precedence is CLI flags > config file > preset.
  void apply_preset_defaults();

  // Checks cross-key invariants: known preset, the sections that preset
  // needs, and deterministic mode having a seed to be deterministic in.
  void validate() const;

  // Typed views over the [codec], [codec.schedule], [unet] and
  // [unet.schedule] sections, with library defaults for absent keys.
  CodecConfig codec_config() const;
  TrainSchedule codec_schedule() const;
  UNetConfig unet_config() const;
  DownscaleSchedule unet_schedule() const;
};

}  // namespace latcomp
