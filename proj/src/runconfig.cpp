#include "latcomp/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "latcomp/errors.hpp"

namespace latcomp {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0;
  size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_leaf(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

bool valid_section(const std::string& name) {
  if (name.empty() || name.front() == '.' || name.back() == '.') return false;
  char prev = '.';
  for (char c : name) {
    if (c == '.') {
      if (prev == '.') return false;  // empty path component
    } else if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') {
      return false;
    }
    prev = c;
  }
  return true;
}

[[noreturn]] void bad_line(int line_no, const std::string& line, const std::string& why) {
  throw ConfigError("config line " + std::to_string(line_no) + ": " + why + ": '" + line + "'");
}

const std::map<std::string, std::map<std::string, std::string>>& preset_defaults() {
  // Values a preset pins down; everything else keeps the library defaults
  // and stays overridable in the config file.
  static const std::map<std::string, std::map<std::string, std::string>> table = {
      {"resize", {}},
      {"vae_l1",
       {{"codec.in_channels", "3"},
        {"codec.recon_loss", "l1"},
        {"codec.schedule.finetune_epochs", "0"}}},
      {"vae_charbonnier",
       {{"codec.in_channels", "3"},
        {"codec.recon_loss", "charbonnier"},
        {"codec.schedule.finetune_epochs", "0"}}},
      {"vae_single_var",
       {{"codec.in_channels", "1"},
        {"codec.recon_loss", "charbonnier"},
        {"codec.schedule.finetune_epochs", "0"}}},
      {"vae_finetune", {{"codec.in_channels", "1"}, {"codec.recon_loss", "charbonnier"}}},
      {"down_inter", {}},
      {"down_raw", {{"unet.target_space", "raw"}, {"unet.out_channels", "1"}}},
      {"down_latent", {{"unet.target_space", "latent"}}},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& known_presets() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : preset_defaults()) out.push_back(name);
    return out;
  }();
  return names;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') bad_line(line_no, line, "section header missing ']'");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_section(section)) bad_line(line_no, line, "invalid section name");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) bad_line(line_no, line, "expected 'key = value'");
    const std::string leaf = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_leaf(leaf)) bad_line(line_no, line, "invalid key");
    const std::string key = section.empty() ? leaf : section + "." + leaf;
    if (cfg.values.count(key)) bad_line(line_no, line, "duplicate key '" + key + "'");
    cfg.values.emplace(key, value);
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string RunConfig::serialize() const {
  // Canonical form: sorted top-level keys first, then each section sorted
  // by name with its keys sorted, so equal configs serialize identically.
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::ostringstream out;
  for (const auto& [key, value] : values) {
    const size_t dot = key.rfind('.');
    if (dot == std::string::npos) {
      out << key << " = " << value << "\n";
    } else {
      sections[key.substr(0, dot)].emplace(key.substr(dot + 1), value);
    }
  }
  bool first = out.tellp() == std::streampos(0);
  for (const auto& [name, entries] : sections) {
    if (!first) out << "\n";
    first = false;
    out << "[" << name << "]\n";
    for (const auto& [leaf, value] : entries) out << leaf << " = " << value << "\n";
  }
  return out.str();
}

bool RunConfig::has(const std::string& key) const { return values.count(key) != 0; }

std::string RunConfig::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  const std::string& v = it->second;
  errno = 0;
  char* end = nullptr;
  const long long parsed = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("value for " + key + " is not an integer: '" + v + "'");
  return parsed;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  const std::string& v = it->second;
  errno = 0;
  char* end = nullptr;
  const double parsed = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("value for " + key + " is not a number: '" + v + "'");
  return parsed;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("value for " + key + " is not a boolean: '" + it->second + "'");
}

std::vector<int> RunConfig::get_int_list(const std::string& key, std::vector<int> fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<int> out;
  std::string item;
  std::istringstream in(it->second);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    errno = 0;
    char* end = nullptr;
    const long long parsed = std::strtoll(item.c_str(), &end, 10);
    if (item.empty() || end != item.c_str() + item.size() || errno == ERANGE ||
        parsed < std::numeric_limits<int>::min() || parsed > std::numeric_limits<int>::max())
      throw ConfigError("value for " + key + " is not an integer list: '" + it->second + "'");
    out.push_back(static_cast<int>(parsed));
  }
  if (out.empty())
    throw ConfigError("value for " + key + " is not an integer list: '" + it->second + "'");
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const size_t dot = key.rfind('.');
  const std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
  const bool section_ok = dot == std::string::npos || valid_section(key.substr(0, dot));
  if (!valid_leaf(leaf) || !section_ok) throw ConfigError("invalid config key: '" + key + "'");
  if (value.find('\n') != std::string::npos)
    throw ConfigError("config value for " + key + " must be a single line");
  values[key] = trim(value);
}

uint64_t RunConfig::seed() const { return static_cast<uint64_t>(get_int("seed", 0)); }

bool RunConfig::deterministic() const { return get_bool("deterministic", false); }

void RunConfig::apply_preset_defaults() {
  const std::string name = preset();
  if (name.empty()) return;
  auto it = preset_defaults().find(name);
  if (it == preset_defaults().end()) {
    std::string known;
    for (const auto& p : known_presets()) known += (known.empty() ? "" : ", ") + p;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  for (const auto& [key, value] : it->second) values.emplace(key, value);
}

void RunConfig::validate() const {
  const std::string name = preset();
  if (!name.empty()) {
    if (!preset_defaults().count(name)) {
      std::string known;
      for (const auto& p : known_presets()) known += (known.empty() ? "" : ", ") + p;
      throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
    }
    auto section_present = [&](const std::string& prefix) {
      auto it = values.lower_bound(prefix + ".");
      return it != values.end() && it->first.rfind(prefix + ".", 0) == 0;
    };
    std::vector<std::string> required = {"data"};
    if (name.rfind("vae_", 0) == 0) required.push_back("codec");
    if (name == "down_raw" || name == "down_latent") required.push_back("unet");
    for (const auto& section : required) {
      if (!section_present(section))
        throw ConfigError("preset '" + name + "' needs a [" + section + "] section");
    }
  }
  if (deterministic() && !has("seed"))
    throw ConfigError("deterministic mode needs an explicit seed");
  // Surface malformed core values early rather than mid-run.
  seed();
  if (has("codec.in_channels") || has("codec.stage_channels")) codec_config();
  if (has("unet.in_channels") || has("unet.stages")) unet_config();
}

namespace {

int narrow(int64_t v, const std::string& key) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError("value for " + key + " is out of range: " + std::to_string(v));
  return static_cast<int>(v);
}

}  // namespace

CodecConfig RunConfig::codec_config() const {
  CodecConfig c;
  c.stage_channels = get_int_list("codec.stage_channels", c.stage_channels);
  c.base_channels = narrow(
      get_int("codec.base_channels", c.stage_channels.empty() ? c.base_channels : c.stage_channels.front()),
      "codec.base_channels");
  c.in_channels = narrow(get_int("codec.in_channels", c.in_channels), "codec.in_channels");
  c.res_blocks_per_stage =
      narrow(get_int("codec.res_blocks_per_stage", c.res_blocks_per_stage), "codec.res_blocks_per_stage");
  c.latent_channels = narrow(get_int("codec.latent_channels", c.latent_channels), "codec.latent_channels");
  c.downsample_stages =
      narrow(get_int("codec.downsample_stages", c.downsample_stages), "codec.downsample_stages");
  c.norm_groups = narrow(get_int("codec.norm_groups", c.norm_groups), "codec.norm_groups");
  c.charbonnier_eps = get_double("codec.charbonnier_eps", c.charbonnier_eps);
  c.kl_weight = get_double("codec.kl_weight", c.kl_weight);
  c.recon_loss = get("codec.recon_loss", c.recon_loss);
  c.validate();
  return c;
}

TrainSchedule RunConfig::codec_schedule() const {
  TrainSchedule s;
  s.pretrain.patch = narrow(get_int("codec.schedule.pretrain_patch", s.pretrain.patch),
                            "codec.schedule.pretrain_patch");
  s.pretrain.epochs = narrow(get_int("codec.schedule.pretrain_epochs", s.pretrain.epochs),
                             "codec.schedule.pretrain_epochs");
  s.finetune.patch = narrow(get_int("codec.schedule.finetune_patch", s.finetune.patch),
                            "codec.schedule.finetune_patch");
  s.finetune.epochs = narrow(get_int("codec.schedule.finetune_epochs", s.finetune.epochs),
                             "codec.schedule.finetune_epochs");
  s.batch_size = narrow(get_int("codec.schedule.batch_size", s.batch_size), "codec.schedule.batch_size");
  s.learning_rate = get_double("codec.schedule.learning_rate", s.learning_rate);
  s.optimizer = get("codec.schedule.optimizer", s.optimizer);
  s.seed = seed();
  s.checkpoint_every =
      narrow(get_int("codec.schedule.checkpoint_every", s.checkpoint_every), "codec.schedule.checkpoint_every");
  s.checkpoint_dir = get("codec.schedule.checkpoint_dir", s.checkpoint_dir);
  s.validate();
  return s;
}

UNetConfig RunConfig::unet_config() const {
  UNetConfig u;
  u.in_channels = narrow(get_int("unet.in_channels", u.in_channels), "unet.in_channels");
  u.stages = narrow(get_int("unet.stages", u.stages), "unet.stages");
  u.res_blocks_per_stage =
      narrow(get_int("unet.res_blocks_per_stage", u.res_blocks_per_stage), "unet.res_blocks_per_stage");
  u.base_channels = narrow(get_int("unet.base_channels", u.base_channels), "unet.base_channels");
  u.out_channels = narrow(get_int("unet.out_channels", u.out_channels), "unet.out_channels");
  u.skip_connections = get_bool("unet.skip_connections", u.skip_connections);
  u.norm_groups = narrow(get_int("unet.norm_groups", u.norm_groups), "unet.norm_groups");
  u.validate();
  return u;
}

DownscaleSchedule RunConfig::unet_schedule() const {
  DownscaleSchedule d;
  d.batch_size = narrow(get_int("unet.schedule.batch_size", d.batch_size), "unet.schedule.batch_size");
  d.epochs = narrow(get_int("unet.schedule.epochs", d.epochs), "unet.schedule.epochs");
  d.learning_rate = get_double("unet.schedule.learning_rate", d.learning_rate);
  d.optimizer = get("unet.schedule.optimizer", d.optimizer);
  d.seed = seed();
  d.checkpoint_every =
      narrow(get_int("unet.schedule.checkpoint_every", d.checkpoint_every), "unet.schedule.checkpoint_every");
  d.checkpoint_dir = get("unet.schedule.checkpoint_dir", d.checkpoint_dir);
  d.raw_patch = narrow(get_int("unet.schedule.raw_patch", d.raw_patch), "unet.schedule.raw_patch");
  d.validate();
  return d;
}

}  // namespace latcomp
