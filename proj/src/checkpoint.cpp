#include "latcomp/checkpoint.hpp"

#include <cstdio>
#include <cstring>

#include "blockfile.hpp"
#include "json.hpp"

namespace latcomp {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'L', 'C', 'K', 'P'};
constexpr uint16_t kVersion = 1;

json params_manifest(const std::vector<nn::ParamRef<float>>& params) {
  json list = json::array();
  for (const auto& p : params)
    list.push_back({{"name", p.name}, {"count", p.value->data.size()}});
  return list;
}

std::vector<uint8_t> params_blob(const std::vector<nn::ParamRef<float>>& params) {
  size_t total = 0;
  for (const auto& p : params) total += p.value->data.size();
  std::vector<uint8_t> blob(total * sizeof(float));
  size_t off = 0;
  for (const auto& p : params) {
    std::memcpy(blob.data() + off, p.value->data.data(), p.value->data.size() * sizeof(float));
    off += p.value->data.size() * sizeof(float);
  }
  return blob;
}

void restore_params(const json& manifest, const std::vector<uint8_t>& blob,
                    const std::vector<nn::ParamRef<float>>& params, const std::string& path) {
  if (!manifest.is_array() || manifest.size() != params.size())
    throw IntegrityError("archive '" + path + "' lists " + std::to_string(manifest.size()) +
                         " parameter tensors, the rebuilt network has " +
                         std::to_string(params.size()));
  size_t off = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    std::string name = manifest[i].value("name", "");
    size_t count = manifest[i].value("count", size_t{0});
    if (name != params[i].name || count != params[i].value->data.size())
      throw IntegrityError("archive '" + path + "' parameter '" + name +
                           "' does not match the rebuilt network's '" + params[i].name + "'");
    if (off + count * sizeof(float) > blob.size())
      throw IntegrityError("archive '" + path + "' parameter blob is too short");
    std::memcpy(params[i].value->data.data(), blob.data() + off, count * sizeof(float));
    off += count * sizeof(float);
  }
  if (off != blob.size())
    throw IntegrityError("archive '" + path + "' parameter blob has trailing bytes");
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void save_codec_checkpoint(const CodecModel& model, const std::string& path) {
  auto params = const_cast<CodecModel&>(model).net.params();
  json header{{"kind", "codec"},
              {"config", json::parse(model.config.to_json())},
              {"norm_stats", json::parse(model.stats.to_json())},
              {"history_csv", history_to_csv(model.history)},
              {"provenance", model.provenance},
              {"params", params_manifest(params)},
              {"fingerprint", hex64(model.fingerprint())}};
  detail::write_block_file(path, kMagic, kVersion, header, params_blob(params));
}

CodecModel load_codec_checkpoint(const std::string& path) {
  detail::BlockFile a = detail::read_block_file(path, kMagic, kVersion, "model archive");
  if (a.header.value("kind", "") != "codec")
    throw IoError("'" + path + "' holds a '" + a.header.value("kind", "?") +
                  "' model, expected a codec");
  CodecModel model;
  try {
    model.config = CodecConfig::from_json(a.header.at("config").dump());
    model.stats = NormStats::from_json(a.header.at("norm_stats").dump());
    model.history = history_from_csv(a.header.value("history_csv", "phase,epoch,loss,recon,kl\n"));
    if (a.header.contains("provenance"))
      model.provenance = a.header.at("provenance").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw IoError("malformed archive header in '" + path + "': " + e.what());
  }
  model.net = nn::VaeNet<float>(model.config, 0);
  restore_params(a.header.value("params", json::array()), a.payload, model.net.params(), path);
  if (hex64(model.fingerprint()) != a.header.value("fingerprint", ""))
    throw IntegrityError("archive '" + path +
                         "' fingerprint does not match its stored config and weights");
  return model;
}

void save_downscaler_checkpoint(const DownscalerModel& model, const std::string& path) {
  auto params = const_cast<DownscalerModel&>(model).net.params();
  json header{{"kind", "downscaler"},
              {"config", json::parse(model.config.to_json())},
              {"target_space", model.target_space},
              {"target_variable", model.target_variable},
              {"input_order", model.input_order},
              {"input_stats", json::parse(model.input_stats.to_json())},
              {"target_stats", json::parse(model.target_stats.to_json())},
              {"upscale_factor", model.upscale_factor},
              {"raw_patch", model.raw_patch},
              {"raw_blend", model.raw_blend == BlendMode::feather ? "feather" : "average"},
              {"history_csv", history_to_csv(model.history)},
              {"provenance", model.provenance},
              {"params", params_manifest(params)},
              {"fingerprint", hex64(model.fingerprint())}};
  detail::write_block_file(path, kMagic, kVersion, header, params_blob(params));
}

DownscalerModel load_downscaler_checkpoint(const std::string& path) {
  detail::BlockFile a = detail::read_block_file(path, kMagic, kVersion, "model archive");
  if (a.header.value("kind", "") != "downscaler")
    throw IoError("'" + path + "' holds a '" + a.header.value("kind", "?") +
                  "' model, expected a downscaler");
  DownscalerModel model;
  try {
    model.config = UNetConfig::from_json(a.header.at("config").dump());
    model.target_space = a.header.value("target_space", "latent");
    model.target_variable = a.header.value("target_variable", "");
    model.input_order = a.header.value("input_order", std::vector<std::string>{});
    model.input_stats = NormStats::from_json(a.header.at("input_stats").dump());
    model.target_stats = NormStats::from_json(a.header.at("target_stats").dump());
    model.upscale_factor = a.header.value("upscale_factor", 8);
    model.raw_patch = a.header.value("raw_patch", 256);
    model.raw_blend = a.header.value("raw_blend", "feather") == "average" ? BlendMode::average
                                                                          : BlendMode::feather;
    model.history = history_from_csv(a.header.value("history_csv", "phase,epoch,loss,recon,kl\n"));
    if (a.header.contains("provenance"))
      model.provenance = a.header.at("provenance").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw IoError("malformed archive header in '" + path + "': " + e.what());
  }
  model.net = nn::UNet<float>(model.config, 0);
  restore_params(a.header.value("params", json::array()), a.payload, model.net.params(), path);
  if (hex64(model.fingerprint()) != a.header.value("fingerprint", ""))
    throw IntegrityError("archive '" + path +
                         "' fingerprint does not match its stored config and weights");
  return model;
}

std::string checkpoint_kind(const std::string& path) {
  detail::BlockFile a = detail::read_block_file(path, kMagic, kVersion, "model archive");
  std::string kind = a.header.value("kind", "");
  if (kind.empty()) throw IoError("'" + path + "' has no model kind");
  return kind;
}

}  // namespace latcomp
