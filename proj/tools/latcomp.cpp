// latcomp — command line front end for the latent compression and
// downscaling library. One subcommand per process; every output lands via
// write-to-temp-then-rename so a crash never leaves a half-written file.
//
// Exit codes: 0 success, 2 configuration error, 3 training abort,
// 4 data/file error.

#include <zlib.h>

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "latcomp/archive.hpp"
#include "latcomp/checkpoint.hpp"
#include "latcomp/codec.hpp"
#include "latcomp/container.hpp"
#include "latcomp/downscale.hpp"
#include "latcomp/errors.hpp"
#include "latcomp/metrics.hpp"
#include "latcomp/runconfig.hpp"
#include "latcomp/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace latcomp;

namespace {

// ---------------------------------------------------------------------------
// Shared option plumbing

struct CommonOpts {
  std::string config_path;
  std::string preset;
  std::string seed;  // kept as text so "not given" is distinguishable
  std::string out;
  bool deterministic = false;
  bool force = false;
};

void add_common_options(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "Experiment config file (key = value with [sections])");
  cmd->add_option("--preset", c.preset, "Experiment preset; overrides the config file");
  cmd->add_option("--seed", c.seed, "Seed for all derived random streams");
  cmd->add_flag("--deterministic", c.deterministic, "Require a seed and reproducible outputs");
  cmd->add_flag("--force", c.force, "Write into a non-empty output directory");
  cmd->add_option("--out", c.out, "Output directory");
}

RunConfig load_run_config(const CommonOpts& c) {
  RunConfig cfg =
      c.config_path.empty() ? RunConfig{} : RunConfig::parse_file(c.config_path);
  // Command line beats file beats preset defaults.
  if (!c.preset.empty()) cfg.set("preset", c.preset);
  if (!c.seed.empty()) cfg.set("seed", c.seed);
  if (c.deterministic) cfg.set("deterministic", "true");
  if (!c.out.empty()) cfg.set("out", c.out);
  cfg.apply_preset_defaults();
  return cfg;
}

std::string cache_root() {
  const char* env = std::getenv("LATCOMP_CACHE");
  return env ? std::string(env) : std::string();
}

// Datasets referenced by relative path are also looked up under
// $LATCOMP_CACHE, so configs can name cached datasets portably.
std::string resolve_dataset_dir(const std::string& dir) {
  if (fs::exists(dir)) return dir;
  if (fs::path(dir).is_relative() && !cache_root().empty()) {
    fs::path alt = fs::path(cache_root()) / dir;
    if (fs::exists(alt)) return alt.string();
  }
  throw DataError("dataset directory not found: " + dir);
}

void prepare_out_dir(const std::string& dir, bool force) {
  if (dir.empty()) throw ConfigError("no output directory given (--out or 'out =' in the config)");
  fs::path p(dir);
  if (fs::exists(p)) {
    if (!fs::is_directory(p)) throw IoError("output path is not a directory: " + dir);
    if (!fs::is_empty(p) && !force)
      throw IoError("output directory is not empty: " + dir + " (pass --force to overwrite)");
  } else {
    fs::create_directories(p);
  }
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << text;
    if (!out) throw IoError("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

uint32_t crc32_of(const void* data, size_t n) {
  return static_cast<uint32_t>(
      ::crc32(0L, static_cast<const unsigned char*>(data), static_cast<uInt>(n)));
}

std::string hex32(uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    size_t a = item.find_first_not_of(" \t");
    size_t b = item.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation shared by `synth` and in-memory training

SyntheticSpec field_spec(const RunConfig& cfg) {
  SyntheticSpec spec;
  spec.height = static_cast<int>(cfg.get_int("data.height", 64));
  spec.width = static_cast<int>(cfg.get_int("data.width", 64));
  spec.beta = cfg.get_double("data.beta", spec.beta);
  spec.amplitude = cfg.get_double("data.amplitude", spec.amplitude);
  spec.mean_offset = cfg.get_double("data.mean_offset", spec.mean_offset);
  spec.validate();
  return spec;
}

// Stack one grf per requested variable into a single multi-channel field.
GridField gen_multichannel_field(const SyntheticSpec& base,
                                 const std::vector<std::string>& variables, uint64_t seed) {
  GridField out;
  out.variables = variables;
  out.values = nn::Tensor({static_cast<int>(variables.size()), base.height, base.width});
  const size_t plane = static_cast<size_t>(base.height) * base.width;
  for (size_t c = 0; c < variables.size(); ++c) {
    SyntheticSpec spec = base;
    spec.variable = variables[c];
    spec.seed = nn::mix_seed(seed, nn::hash_name(variables[c]));
    GridField channel = gen_grf(spec);
    std::copy(channel.values.data.begin(), channel.values.data.end(),
              out.values.data.begin() + static_cast<ptrdiff_t>(c * plane));
    out.lat_range = channel.lat_range;
    out.lon_range = channel.lon_range;
    out.timestamp = channel.timestamp;
  }
  out.validate();
  return out;
}

std::vector<GridField> gen_field_set(const RunConfig& cfg) {
  const int count = static_cast<int>(cfg.get_int("data.count", 16));
  if (count < 1) throw ConfigError("data.count must be >= 1");
  const SyntheticSpec base = field_spec(cfg);
  std::vector<std::string> variables = split_list(cfg.get("data.variables", "T2M"));
  if (variables.empty()) throw ConfigError("data.variables must name at least one channel");
  const uint64_t stream = nn::mix_seed(cfg.seed(), nn::hash_name("synth_fields"));
  // Distinct timestamps keep every sample addressable in a latent archive.
  const int64_t t0 = cfg.get_int("data.timestamp0", 0);
  const int64_t step = cfg.get_int("data.timestamp_step", 3600);
  std::vector<GridField> fields;
  fields.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    SyntheticSpec spec = base;
    spec.timestamp = t0 + step * i;
    fields.push_back(
        gen_multichannel_field(spec, variables, nn::mix_seed(stream, static_cast<uint64_t>(i))));
  }
  return fields;
}

std::vector<ForecastPair> gen_pair_set(const RunConfig& cfg) {
  const int count = static_cast<int>(cfg.get_int("data.count", 16));
  if (count < 1) throw ConfigError("data.count must be >= 1");
  PairSpec spec;
  spec.high_spec = field_spec(cfg);
  spec.high_spec.variable = cfg.get("data.target", "T2M");
  spec.downsample_factor = static_cast<int>(cfg.get_int("data.factor", spec.downsample_factor));
  spec.input_channels = static_cast<int>(cfg.get_int("data.input_channels", spec.input_channels));
  spec.validate();
  const uint64_t stream = nn::mix_seed(cfg.seed(), nn::hash_name("synth_pairs"));
  std::vector<ForecastPair> pairs;
  pairs.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    PairSpec one = spec;
    one.high_spec.seed = nn::mix_seed(stream, static_cast<uint64_t>(2 * i));
    one.mixing_seed = nn::mix_seed(stream, static_cast<uint64_t>(2 * i + 1));
    pairs.push_back(gen_forecast_pair(one));
  }
  return pairs;
}

std::vector<PairSample> to_pair_samples(std::vector<ForecastPair> pairs) {
  std::vector<PairSample> out;
  out.reserve(pairs.size());
  for (auto& p : pairs) out.push_back(PairSample{std::move(p.low), std::move(p.high)});
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directories: manifest + raw containers

json read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DataError("no manifest.json in dataset directory: " + dir);
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + dir + ": " + e.what());
  }
  return m;
}

std::vector<GridField> load_field_dataset(const std::string& dir) {
  const json m = read_manifest(dir);
  if (m.value("kind", "") != "fields")
    throw DataError("dataset in " + dir + " is not a field set");
  std::vector<GridField> fields;
  for (const auto& entry : m.at("entries"))
    fields.push_back(read_raw_container((fs::path(dir) / entry.at("file").get<std::string>()).string()));
  if (fields.empty()) throw DataError("dataset in " + dir + " lists no fields");
  return fields;
}

std::vector<PairSample> load_pair_dataset(const std::string& dir) {
  const json m = read_manifest(dir);
  if (m.value("kind", "") != "pairs")
    throw DataError("dataset in " + dir + " is not a pair set");
  std::vector<PairSample> pairs;
  for (const auto& entry : m.at("entries")) {
    PairSample s;
    s.low = read_raw_container((fs::path(dir) / entry.at("low").get<std::string>()).string());
    s.high = read_raw_container((fs::path(dir) / entry.at("high").get<std::string>()).string());
    pairs.push_back(std::move(s));
  }
  if (pairs.empty()) throw DataError("dataset in " + dir + " lists no pairs");
  return pairs;
}

std::vector<GridField> fields_for_training(const RunConfig& cfg) {
  const std::string kind = cfg.get("data.kind", "");
  if (kind == "fields") return gen_field_set(cfg);
  if (kind == "dir") return load_field_dataset(resolve_dataset_dir(cfg.get("data.dir")));
  throw ConfigError("[data] kind must be 'fields' or 'dir' for codec training, got '" + kind + "'");
}

std::vector<PairSample> pairs_for_training(const RunConfig& cfg) {
  const std::string kind = cfg.get("data.kind", "");
  if (kind == "pairs") return to_pair_samples(gen_pair_set(cfg));
  if (kind == "dir") return load_pair_dataset(resolve_dataset_dir(cfg.get("data.dir")));
  throw ConfigError("[data] kind must be 'pairs' or 'dir' for downscaler training, got '" + kind +
                    "'");
}

// ---------------------------------------------------------------------------
// synth: materialize a synthetic dataset with a manifest

std::string synth_out_dir(const RunConfig& cfg) {
  std::string out = cfg.out_dir();
  if (!out.empty()) return out;
  if (cache_root().empty())
    throw ConfigError("no output directory: pass --out or set LATCOMP_CACHE");
  // Name the cached dataset by its generation settings so identical configs
  // share a directory and different ones never collide.
  RunConfig data_only;
  for (const auto& [k, v] : cfg.values)
    if (k.rfind("data.", 0) == 0) data_only.values.emplace(k, v);
  data_only.set("seed", std::to_string(cfg.seed()));
  char tag[17];
  std::snprintf(tag, sizeof(tag), "%016" PRIx64, nn::hash_name(data_only.serialize()));
  return (fs::path(cache_root()) / (std::string("synth-") + tag)).string();
}

int cmd_synth(const CommonOpts& common) {
  RunConfig cfg = load_run_config(common);
  cfg.validate();
  const std::string kind = cfg.get("data.kind", "");
  if (kind != "fields" && kind != "pairs")
    throw ConfigError("synth needs [data] kind = fields or pairs, got '" + kind + "'");
  const std::string out = synth_out_dir(cfg);
  prepare_out_dir(out, common.force);

  json manifest;
  manifest["kind"] = kind;
  manifest["seed"] = cfg.seed();
  // Echo only the settings that determine the data, so two runs writing to
  // different directories still produce byte-identical manifests.
  RunConfig generative;
  for (const auto& [k, v] : cfg.values)
    if (k.rfind("data.", 0) == 0) generative.values.emplace(k, v);
  manifest["config"] = generative.serialize();
  json entries = json::array();

  if (kind == "fields") {
    const std::vector<GridField> fields = gen_field_set(cfg);
    for (size_t i = 0; i < fields.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "field_%04zu.f32", i);
      write_raw_container(fields[i], (fs::path(out) / name).string());
      entries.push_back({{"file", name},
                         {"variables", fields[i].variables},
                         {"crc32", hex32(crc32_of(fields[i].values.ptr(),
                                                  fields[i].values.size() * sizeof(float)))}});
    }
    std::printf("wrote %zu fields to %s\n", fields.size(), out.c_str());
  } else {
    const std::vector<ForecastPair> pairs = gen_pair_set(cfg);
    for (size_t i = 0; i < pairs.size(); ++i) {
      char low[32], high[32];
      std::snprintf(low, sizeof(low), "pair_%04zu_low.f32", i);
      std::snprintf(high, sizeof(high), "pair_%04zu_high.f32", i);
      write_raw_container(pairs[i].low, (fs::path(out) / low).string());
      write_raw_container(pairs[i].high, (fs::path(out) / high).string());
      entries.push_back({{"low", low},
                         {"high", high},
                         {"crc32", hex32(crc32_of(pairs[i].high.values.ptr(),
                                                  pairs[i].high.values.size() * sizeof(float)))}});
    }
    std::printf("wrote %zu pairs to %s\n", pairs.size(), out.c_str());
  }

  manifest["entries"] = entries;
  write_text_atomic((fs::path(out) / "manifest.json").string(), manifest.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// train-vae / train-down

void reject_foreign_preset(const RunConfig& cfg, bool training_codec) {
  const std::string preset = cfg.preset();
  if (preset.empty()) return;
  if (preset == "resize" || preset == "down_inter")
    throw ConfigError("preset '" + preset + "' is an interpolation baseline; nothing to train");
  const bool is_codec = preset.rfind("vae_", 0) == 0;
  if (training_codec && !is_codec)
    throw ConfigError("preset '" + preset + "' trains a downscaler; use train-down");
  if (!training_codec && is_codec)
    throw ConfigError("preset '" + preset + "' trains a codec; use train-vae");
}

void print_record(const TrainRecord& r) {
  std::printf("phase %d epoch %d  loss %.6g  recon %.6g  kl %.6g\n", r.phase, r.epoch, r.loss,
              r.recon, r.kl);
  std::fflush(stdout);
}

int cmd_train_vae(const CommonOpts& common) {
  RunConfig cfg = load_run_config(common);
  cfg.validate();
  reject_foreign_preset(cfg, /*training_codec=*/true);

  const CodecConfig codec_cfg = cfg.codec_config();
  TrainSchedule sched = cfg.codec_schedule();
  const std::string out = cfg.out_dir();
  prepare_out_dir(out, common.force);
  if (sched.checkpoint_dir.empty()) sched.checkpoint_dir = out;

  const std::vector<GridField> fields = fields_for_training(cfg);
  std::printf("training codec on %zu fields (%d channels)\n", fields.size(),
              codec_cfg.in_channels);
  CodecModel model = train_vae(codec_cfg, sched, fields, print_record);

  const std::string ckpt = (fs::path(out) / "codec.ckpt").string();
  save_codec_checkpoint(model, ckpt);
  write_text_atomic((fs::path(out) / "history.csv").string(), history_to_csv(model.history));
  write_text_atomic((fs::path(out) / "run_config.ini").string(), cfg.serialize());
  std::printf("saved %s\n", ckpt.c_str());
  return 0;
}

int cmd_train_down(const CommonOpts& common, const std::string& codec_path_flag) {
  RunConfig cfg = load_run_config(common);
  cfg.validate();
  reject_foreign_preset(cfg, /*training_codec=*/false);

  const UNetConfig unet_cfg = cfg.unet_config();
  DownscaleSchedule sched = cfg.unet_schedule();
  const std::string target_space = cfg.get("unet.target_space", "raw");
  const std::string target_variable = cfg.get("unet.target_variable", "T2M");
  const std::string out = cfg.out_dir();
  prepare_out_dir(out, common.force);
  if (sched.checkpoint_dir.empty()) sched.checkpoint_dir = out;

  std::string codec_path =
      codec_path_flag.empty() ? cfg.get("unet.codec_checkpoint", "") : codec_path_flag;
  CodecModel codec;
  const CodecModel* codec_ptr = nullptr;
  if (target_space == "latent") {
    if (codec_path.empty())
      throw ConfigError("latent-space training needs a codec checkpoint (--codec)");
    codec = load_codec_checkpoint(codec_path);
    codec_ptr = &codec;
  }

  const std::vector<PairSample> pairs = pairs_for_training(cfg);
  std::printf("training %s-space downscaler on %zu pairs (target %s)\n", target_space.c_str(),
              pairs.size(), target_variable.c_str());
  DownscalerModel model =
      train_downscaler(unet_cfg, sched, pairs, target_space, target_variable, codec_ptr,
                       print_record);

  const std::string ckpt = (fs::path(out) / "downscaler.ckpt").string();
  save_downscaler_checkpoint(model, ckpt);
  write_text_atomic((fs::path(out) / "history.csv").string(), history_to_csv(model.history));
  write_text_atomic((fs::path(out) / "run_config.ini").string(), cfg.serialize());
  std::printf("saved %s\n", ckpt.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// encode / decode

ArchiveOptions archive_options(const RunConfig& cfg, const std::string& mode_flag,
                               const std::string& dtype_flag) {
  ArchiveOptions opts;
  const std::string mode = mode_flag.empty() ? cfg.get("archive.mode", "mu_only") : mode_flag;
  const std::string dtype = dtype_flag.empty() ? cfg.get("archive.dtype", "f16") : dtype_flag;
  if (mode == "mu_only")
    opts.mode = LatentMode::mu_only;
  else if (mode == "mu_sigma")
    opts.mode = LatentMode::mu_sigma;
  else
    throw ConfigError("archive mode must be mu_only or mu_sigma, got '" + mode + "'");
  if (dtype == "f16")
    opts.dtype = LatentDtype::f16;
  else if (dtype == "f32")
    opts.dtype = LatentDtype::f32;
  else
    throw ConfigError("archive dtype must be f16 or f32, got '" + dtype + "'");
  return opts;
}

int cmd_encode(const CommonOpts& common, const std::string& codec_path, const std::string& store_dir,
               const std::vector<std::string>& inputs, const std::string& mode_flag,
               const std::string& dtype_flag) {
  RunConfig cfg = load_run_config(common);
  const ArchiveOptions opts = archive_options(cfg, mode_flag, dtype_flag);
  const CodecModel model = load_codec_checkpoint(codec_path);
  fs::create_directories(store_dir);
  LatentStore store(store_dir);

  std::string assumptions;
  for (const auto& input : inputs) {
    const GridField field = read_raw_container(input);
    const LatentRepr latent = encode(model, field);
    store.put(latent, opts);
    const RatioReport report = compression_ratio(model.config, field.height(), field.width(), opts);
    assumptions = report.assumptions;
    std::string key = field.variables.front();
    for (size_t i = 1; i < field.variables.size(); ++i) key += "+" + field.variables[i];
    std::printf("%s: stored %s@%lld  raw %lld B  latent %lld B  ratio %.6g\n", input.c_str(),
                key.c_str(), static_cast<long long>(field.timestamp),
                static_cast<long long>(report.raw_bytes),
                static_cast<long long>(report.stored_bytes), report.ratio);
  }
  if (!assumptions.empty()) std::printf("assumptions: %s\n", assumptions.c_str());
  return 0;
}

int cmd_decode(const std::string& codec_path, const std::string& store_dir,
               const std::string& variable, int64_t timestamp, const std::string& out_file,
               bool sample, uint64_t sample_seed) {
  const CodecModel model = load_codec_checkpoint(codec_path);
  const LatentStore store(store_dir);
  const LatentRepr latent = store.get(variable, timestamp);
  const GridField field =
      sample ? decode_sampled(model, latent, sample_seed) : decode(model, latent);
  if (!out_file.empty() && out_file.find('/') != std::string::npos)
    fs::create_directories(fs::path(out_file).parent_path());
  write_raw_container(field, out_file);
  std::printf("decoded %s@%lld -> %s (%dx%d)\n", variable.c_str(),
              static_cast<long long>(timestamp), out_file.c_str(), field.height(), field.width());
  return 0;
}

// ---------------------------------------------------------------------------
// downscale: apply a trained model (or the interpolation baseline)

int cmd_downscale(const CommonOpts& common, const std::string& model_path,
                  const std::string& codec_path, const std::vector<std::string>& inputs,
                  bool baseline, int factor, const std::string& variable) {
  const std::string out = common.out;
  prepare_out_dir(out, common.force);

  DownscalerModel model;
  CodecModel codec;
  const CodecModel* codec_ptr = nullptr;
  if (baseline) {
    if (factor < 2) throw ConfigError("--baseline needs --factor >= 2");
  } else {
    if (model_path.empty()) throw ConfigError("downscale needs --model (or --baseline)");
    model = load_downscaler_checkpoint(model_path);
    if (model.target_space == "latent") {
      if (codec_path.empty())
        throw ConfigError("latent-space downscaler needs its codec checkpoint (--codec)");
      codec = load_codec_checkpoint(codec_path);
      codec_ptr = &codec;
    }
  }

  for (const auto& input : inputs) {
    const GridField low = read_raw_container(input);
    GridField high;
    if (baseline) {
      const std::string var = variable.empty() ? model.target_variable : variable;
      high = interp_baseline(low, var.empty() ? low.variables.front() : var,
                             low.height() * factor, low.width() * factor);
    } else {
      high = downscale(model, low, codec_ptr);
    }
    const std::string name = fs::path(input).filename().string();
    write_raw_container(high, (fs::path(out) / name).string());
    std::printf("%s -> %s (%dx%d)\n", input.c_str(), (fs::path(out) / name).string().c_str(),
                high.height(), high.width());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval: metric + spectrum reports over matched sample directories

struct TruthSet {
  // pairing key (file name the prediction dirs must contain) -> truth field
  std::vector<std::pair<std::string, GridField>> samples;
};

TruthSet load_truth(const std::string& dir) {
  TruthSet set;
  const fs::path root(dir);
  if (fs::exists(root / "manifest.json")) {
    const json m = read_manifest(dir);
    const std::string kind = m.value("kind", "");
    for (const auto& entry : m.at("entries")) {
      if (kind == "fields") {
        const std::string file = entry.at("file").get<std::string>();
        set.samples.emplace_back(file, read_raw_container((root / file).string()));
      } else if (kind == "pairs") {
        // Predictions are named after the coarse input; truth is the fine field.
        const std::string low = entry.at("low").get<std::string>();
        const std::string high = entry.at("high").get<std::string>();
        set.samples.emplace_back(low, read_raw_container((root / high).string()));
      } else {
        throw DataError("dataset in " + dir + " has unknown kind '" + kind + "'");
      }
    }
  } else {
    std::vector<std::string> names;
    if (fs::is_directory(root)) {
      for (const auto& e : fs::directory_iterator(root))
        if (e.path().extension() == ".f32") names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    for (const auto& name : names)
      set.samples.emplace_back(name, read_raw_container((root / name).string()));
  }
  if (set.samples.empty()) throw DataError("no samples found in truth directory: " + dir);
  return set;
}

int cmd_eval(const std::string& truth_dir, const std::vector<std::string>& method_specs,
             const std::string& out, const std::string& variable_flag, double dx_km, bool force) {
  if (method_specs.empty()) throw ConfigError("eval needs at least one --pred NAME=DIR");
  prepare_out_dir(out, force);
  const TruthSet truth = load_truth(resolve_dataset_dir(truth_dir));

  std::vector<std::pair<std::string, std::string>> methods;
  for (const auto& spec : method_specs) {
    const size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      throw ConfigError("--pred expects NAME=DIR, got '" + spec + "'");
    methods.emplace_back(spec.substr(0, eq), resolve_dataset_dir(spec.substr(eq + 1)));
  }

  std::vector<std::string> variables;
  if (!variable_flag.empty())
    variables = split_list(variable_flag);
  else
    variables = truth.samples.front().second.variables;

  std::vector<MetricRow> rows;
  // method -> variable -> running sum of spectra over samples
  std::map<std::string, std::map<std::string, SpectrumResult>> spectra;
  std::map<std::string, std::map<std::string, int>> spectra_n;

  for (const auto& [method, dir] : methods) {
    for (const auto& [name, truth_field] : truth.samples) {
      const fs::path pred_path = fs::path(dir) / name;
      if (!fs::exists(pred_path))
        throw DataError("method '" + method + "' is missing sample '" + name + "' (expected " +
                        pred_path.string() + ")");
      const GridField pred = read_raw_container(pred_path.string());
      for (const auto& var : variables) {
        MetricRow row;
        row.variable = var;
        row.method = method;
        row.lead_hours = 0;
        row.metrics["mse"] = mse(truth_field, pred, var);
        row.metrics["rmse"] = rmse(truth_field, pred, var);
        row.metrics["ssim"] = ssim(truth_field, pred, var);
        rows.push_back(std::move(row));

        const SpectrumResult s = zonal_power_spectrum(pred, var, dx_km);
        auto& acc = spectra[method][var];
        if (acc.power.empty()) {
          acc = s;
        } else {
          for (size_t k = 0; k < acc.power.size(); ++k) acc.power[k] += s.power[k];
          acc.dc_power += s.dc_power;
        }
        spectra_n[method][var] += 1;
      }
    }
  }
  // Truth spectra come along for reference under the method name "truth".
  for (const auto& [name, truth_field] : truth.samples) {
    (void)name;
    for (const auto& var : variables) {
      const SpectrumResult s = zonal_power_spectrum(truth_field, var, dx_km);
      auto& acc = spectra["truth"][var];
      if (acc.power.empty()) {
        acc = s;
      } else {
        for (size_t k = 0; k < acc.power.size(); ++k) acc.power[k] += s.power[k];
        acc.dc_power += s.dc_power;
      }
      spectra_n["truth"][var] += 1;
    }
  }

  const MetricReport report = aggregate_report(rows);
  write_text_atomic((fs::path(out) / "report.csv").string(), report.to_csv());
  write_text_atomic((fs::path(out) / "report.json").string(), report.to_json());
  for (auto& [method, per_var] : spectra) {
    for (auto& [var, acc] : per_var) {
      const int n = spectra_n[method][var];
      for (auto& p : acc.power) p /= n;
      acc.dc_power /= n;
      const std::string file = "spectrum_" + var + "_" + method + ".csv";
      write_text_atomic((fs::path(out) / file).string(), acc.to_csv());
    }
  }

  // A compact on-screen summary: per (variable, method) mean rmse/ssim.
  for (const auto& cell : report.cells) {
    if (cell.metric != "rmse" && cell.metric != "ssim") continue;
    std::printf("%s %s %s: median %.6g (n=%lld)\n", cell.variable.c_str(), cell.method.c_str(),
                cell.metric.c_str(), cell.box.median, static_cast<long long>(cell.count));
  }
  std::printf("wrote %s\n", (fs::path(out) / "report.csv").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// ratio: compression arithmetic without touching any data

int cmd_ratio(const CommonOpts& common, int height, int width, const std::string& mode_flag,
              const std::string& dtype_flag) {
  RunConfig cfg = load_run_config(common);
  const ArchiveOptions opts = archive_options(cfg, mode_flag, dtype_flag);
  const CodecConfig codec_cfg = cfg.codec_config();
  const RatioReport r = compression_ratio(codec_cfg, height, width, opts);
  std::printf("grid %dx%d, latent %d channels, %dx downsampling\n", height, width,
              codec_cfg.latent_channels, 1 << codec_cfg.downsample_stages);
  std::printf("raw %lld B, stored %lld B, ratio %.6g\n", static_cast<long long>(r.raw_bytes),
              static_cast<long long>(r.stored_bytes), r.ratio);
  std::printf("assumptions: %s\n", r.assumptions.c_str());
  const RatioReport ref = reference_archive_ratio();
  std::printf("\nreference operating figure: %.3g (raw %lld B vs stored %lld B)\n", ref.ratio,
              static_cast<long long>(ref.raw_bytes), static_cast<long long>(ref.stored_bytes));
  std::printf("assumptions: %s\n", ref.assumptions.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent compression and downscaling for gridded weather fields"};
  app.require_subcommand(1);

  CommonOpts synth_opts;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset with a manifest");
  add_common_options(synth, synth_opts);

  CommonOpts train_vae_opts;
  CLI::App* train_vae_cmd =
      app.add_subcommand("train-vae", "Train the field codec and save a checkpoint");
  add_common_options(train_vae_cmd, train_vae_opts);

  CommonOpts train_down_opts;
  std::string train_down_codec;
  CLI::App* train_down_cmd =
      app.add_subcommand("train-down", "Train the downscaling network and save a checkpoint");
  add_common_options(train_down_cmd, train_down_opts);
  train_down_cmd->add_option("--codec", train_down_codec,
                             "Codec checkpoint (required for latent-space training)");

  CommonOpts encode_opts;
  std::string encode_codec, encode_store, encode_mode, encode_dtype;
  std::vector<std::string> encode_inputs;
  CLI::App* encode_cmd = app.add_subcommand("encode", "Encode fields into a latent archive");
  add_common_options(encode_cmd, encode_opts);
  encode_cmd->add_option("--codec", encode_codec, "Codec checkpoint")->required();
  encode_cmd->add_option("--store", encode_store, "Latent archive directory")->required();
  encode_cmd->add_option("--mode", encode_mode, "mu_only or mu_sigma");
  encode_cmd->add_option("--dtype", encode_dtype, "f16 or f32");
  encode_cmd->add_option("inputs", encode_inputs, "Field container files")->required();

  std::string decode_codec, decode_store, decode_variable, decode_out;
  int64_t decode_timestamp = 0;
  bool decode_sample = false;
  uint64_t decode_seed = 0;
  CLI::App* decode_cmd = app.add_subcommand("decode", "Decode one archived latent to a field");
  decode_cmd->add_option("--codec", decode_codec, "Codec checkpoint")->required();
  decode_cmd->add_option("--store", decode_store, "Latent archive directory")->required();
  decode_cmd->add_option("--variable", decode_variable, "Archive key ('+'-joined variables)")
      ->required();
  decode_cmd->add_option("--timestamp", decode_timestamp, "Sample timestamp");
  decode_cmd->add_option("--out", decode_out, "Output container file")->required();
  decode_cmd->add_flag("--sample", decode_sample, "Draw from the posterior instead of its mean");
  decode_cmd->add_option("--sample-seed", decode_seed, "Seed for --sample");

  CommonOpts downscale_opts;
  std::string downscale_model, downscale_codec, downscale_variable;
  std::vector<std::string> downscale_inputs;
  bool downscale_baseline = false;
  int downscale_factor = 0;
  CLI::App* downscale_cmd =
      app.add_subcommand("downscale", "Apply a trained downscaler (or bilinear baseline)");
  add_common_options(downscale_cmd, downscale_opts);
  downscale_cmd->add_option("--model", downscale_model, "Downscaler checkpoint");
  downscale_cmd->add_option("--codec", downscale_codec, "Codec checkpoint for latent-space models");
  downscale_cmd->add_flag("--baseline", downscale_baseline, "Bilinear interpolation baseline");
  downscale_cmd->add_option("--factor", downscale_factor, "Upscaling factor for --baseline");
  downscale_cmd->add_option("--variable", downscale_variable, "Variable for --baseline");
  downscale_cmd->add_option("inputs", downscale_inputs, "Coarse container files")->required();

  std::string eval_truth, eval_out, eval_variable;
  std::vector<std::string> eval_preds;
  double eval_dx_km = 1.0;
  bool eval_force = false;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score prediction directories against truth");
  eval_cmd->add_option("--truth", eval_truth, "Truth dataset directory")->required();
  eval_cmd->add_option("--pred", eval_preds, "Method directory as NAME=DIR (repeatable)")
      ->required();
  eval_cmd->add_option("--out", eval_out, "Report output directory")->required();
  eval_cmd->add_option("--variable", eval_variable, "Variables to score (default: all in truth)");
  eval_cmd->add_option("--dx-km", eval_dx_km, "Zonal grid spacing for spectrum wavelengths");
  eval_cmd->add_flag("--force", eval_force, "Write into a non-empty output directory");

  CommonOpts ratio_opts;
  int ratio_height = 4384, ratio_width = 6880;
  std::string ratio_mode, ratio_dtype;
  CLI::App* ratio_cmd = app.add_subcommand("ratio", "Report compression-ratio arithmetic");
  add_common_options(ratio_cmd, ratio_opts);
  ratio_cmd->add_option("--height", ratio_height, "Source grid height");
  ratio_cmd->add_option("--width", ratio_width, "Source grid width");
  ratio_cmd->add_option("--mode", ratio_mode, "mu_only or mu_sigma");
  ratio_cmd->add_option("--dtype", ratio_dtype, "f16 or f32");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // bad command line == configuration error
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_opts);
    if (train_vae_cmd->parsed()) return cmd_train_vae(train_vae_opts);
    if (train_down_cmd->parsed()) return cmd_train_down(train_down_opts, train_down_codec);
    if (encode_cmd->parsed())
      return cmd_encode(encode_opts, encode_codec, encode_store, encode_inputs, encode_mode,
                        encode_dtype);
    if (decode_cmd->parsed())
      return cmd_decode(decode_codec, decode_store, decode_variable, decode_timestamp, decode_out,
                        decode_sample, decode_seed);
    if (downscale_cmd->parsed())
      return cmd_downscale(downscale_opts, downscale_model, downscale_codec, downscale_inputs,
                           downscale_baseline, downscale_factor, downscale_variable);
    if (eval_cmd->parsed())
      return cmd_eval(eval_truth, eval_preds, eval_out, eval_variable, eval_dx_km, eval_force);
    if (ratio_cmd->parsed())
      return cmd_ratio(ratio_opts, ratio_height, ratio_width, ratio_mode, ratio_dtype);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const TrainAbort& e) {
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    if (!e.last_checkpoint.empty())
      std::fprintf(stderr, "last checkpoint: %s\n", e.last_checkpoint.c_str());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 4;
  } catch (const IoError& e) {
    std::fprintf(stderr, "file error: %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
