#include "latcomp/downscale.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "latcomp/checkpoint.hpp"
#include "latcomp/nn/adam.hpp"
#include "latcomp/nn/loss.hpp"

namespace latcomp {

GridField bilinear_resize(const GridField& field, int height, int width) {
  field.validate();
  GridField out;
  out.values = nn::bilinear_resize(field.values, height, width);
  out.variables = field.variables;
  out.lat_range = field.lat_range;
  out.lon_range = field.lon_range;
  out.timestamp = field.timestamp;
  return out;
}

nn::Tensor assemble_input(const std::vector<GridField>& parts,
                          const std::vector<std::string>& order, const NormStats& stats) {
  if (parts.empty()) throw DataError("no input fields to assemble");
  if (order.empty()) throw ConfigError("empty channel order");
  int H = parts.front().height(), W = parts.front().width();
  for (const auto& p : parts) {
    p.validate();
    if (p.height() != H || p.width() != W)
      throw DataError("input fields disagree on grid dims: " + std::to_string(p.height()) + "x" +
                      std::to_string(p.width()) + " vs " + std::to_string(H) + "x" +
                      std::to_string(W));
  }

  nn::Tensor x({static_cast<int>(order.size()), H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (size_t i = 0; i < order.size(); ++i) {
    const std::string& name = order[i];
    const GridField* source = nullptr;
    int channel = -1;
    for (const auto& p : parts) {
      int c = p.variable_index(name);
      if (c >= 0) {
        source = &p;
        channel = c;
        break;
      }
    }
    if (!source) throw DataError("channel '" + name + "' missing from the assembled inputs");
    const auto& e = stats.at(name);
    const float* src = source->values.ptr() + static_cast<size_t>(channel) * plane;
    float* dst = x.ptr() + static_cast<size_t>(i) * plane;
    for (int64_t j = 0; j < plane; ++j)
      dst[j] = static_cast<float>((static_cast<double>(src[j]) - e.mean) / e.std);
  }
  return x;
}

uint64_t channel_order_hash(const std::vector<std::string>& order) {
  std::string joined;
  for (const auto& name : order) {
    joined += name;
    joined += '\n';
  }
  return nn::hash_name(joined);
}

GridField interp_baseline(const GridField& low, const std::string& variable, int height,
                          int width) {
  low.validate();
  int c = low.variable_index(variable);
  if (c < 0) throw DataError("missing variable '" + variable + "' in the coarse input");
  GridField single;
  single.values = nn::Tensor({1, low.height(), low.width()});
  const int64_t plane = static_cast<int64_t>(low.height()) * low.width();
  std::copy_n(low.values.ptr() + static_cast<size_t>(c) * plane, plane, single.values.ptr());
  single.variables = {variable};
  single.lat_range = low.lat_range;
  single.lon_range = low.lon_range;
  single.timestamp = low.timestamp;
  return bilinear_resize(single, height, width);
}

namespace {

nn::Tensor extract_tile(const nn::Tensor& x, int r, int c, int ph, int pw) {
  nn::Tensor tile({x.channels(), ph, pw});
  for (int ch = 0; ch < x.channels(); ++ch)
    for (int y = 0; y < ph; ++y)
      for (int xx = 0; xx < pw; ++xx) tile.at(ch, y, xx) = x.at(ch, r + y, c + xx);
  return tile;
}

struct SampleSet {
  std::vector<nn::Tensor> inputs;
  std::vector<nn::Tensor> targets;
};

void check_pairs(const std::vector<PairSample>& pairs, const std::string& target_variable) {
  if (pairs.empty()) throw DataError("no training pairs");
  const GridField& low0 = pairs.front().low;
  const GridField& high0 = pairs.front().high;
  for (size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].low.validate();
    pairs[i].high.validate();
    if (pairs[i].low.height() != low0.height() || pairs[i].low.width() != low0.width() ||
        pairs[i].low.variables != low0.variables)
      throw DataError("pair " + std::to_string(i) + " disagrees on the coarse grid layout");
    if (pairs[i].high.height() != high0.height() || pairs[i].high.width() != high0.width())
      throw DataError("pair " + std::to_string(i) + " disagrees on the truth grid dims");
    if (pairs[i].high.variable_index(target_variable) < 0)
      throw DataError("pair " + std::to_string(i) + " truth lacks target variable '" +
                      target_variable + "'");
  }
  if (high0.height() % low0.height() != 0 || high0.width() % low0.width() != 0)
    throw DataError("truth dims are not an integer multiple of the coarse dims");
  if (high0.height() / low0.height() != high0.width() / low0.width())
    throw DataError("anisotropic upscale factors are not supported");
}

GridField select_channel(const GridField& f, const std::string& variable) {
  int c = f.variable_index(variable);
  GridField out;
  out.values = nn::Tensor({1, f.height(), f.width()});
  const int64_t plane = static_cast<int64_t>(f.height()) * f.width();
  std::copy_n(f.values.ptr() + static_cast<size_t>(c) * plane, plane, out.values.ptr());
  out.variables = {variable};
  out.lat_range = f.lat_range;
  out.lon_range = f.lon_range;
  out.timestamp = f.timestamp;
  return out;
}

void train_loop(DownscalerModel& model, const DownscaleSchedule& sched, const SampleSet& samples,
                const std::function<void(const TrainRecord&)>& on_epoch) {
  auto params = model.net.params();
  nn::Adam<float> opt(params, sched.learning_rate);
  std::string last_checkpoint;

  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    uint64_t epoch_key = nn::mix_seed(nn::mix_seed(sched.seed, static_cast<uint64_t>(epoch)),
                                      nn::hash_name("down_epoch"));
    nn::Rng shuffle_rng(nn::mix_seed(epoch_key, nn::hash_name("shuffle")));
    std::vector<size_t> order(samples.inputs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    shuffle_rng.shuffle(order);

    double sum_loss = 0.0;
    size_t cursor = 0;
    while (cursor < order.size()) {
      size_t batch_n = std::min(static_cast<size_t>(sched.batch_size), order.size() - cursor);
      model.net.zero_grad();
      for (size_t b = 0; b < batch_n; ++b) {
        size_t idx = order[cursor + b];
        typename nn::UNet<float>::Cache cache;
        nn::Tensor pred = model.net.forward(samples.inputs[idx], cache);
        auto loss = nn::mse_loss(pred, samples.targets[idx]);
        if (!std::isfinite(loss.value))
          throw TrainAbort("non-finite loss in epoch " + std::to_string(epoch), last_checkpoint);
        model.net.backward(loss.grad, cache);
        sum_loss += loss.value;
      }
      nn::scale_grads(params, 1.0 / static_cast<double>(batch_n));
      opt.step();
      cursor += batch_n;
    }

    TrainRecord rec;
    rec.phase = 1;
    rec.epoch = epoch;
    rec.loss = sum_loss / static_cast<double>(order.size());
    rec.recon = rec.loss;
    model.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!sched.checkpoint_dir.empty() && (epoch + 1) % sched.checkpoint_every == 0) {
      std::filesystem::create_directories(sched.checkpoint_dir);
      std::string path = sched.checkpoint_dir + "/downscaler_e" + std::to_string(epoch) + ".ckpt";
      save_downscaler_checkpoint(model, path);
      last_checkpoint = path;
    }
  }
}

}  // namespace

uint64_t DownscalerModel::fingerprint() const {
  auto params = const_cast<DownscalerModel*>(this)->net.params();
  return nn::mix_seed(config.fingerprint(), nn::params_hash(params));
}

DownscalerModel train_downscaler(const UNetConfig& cfg, const DownscaleSchedule& sched,
                                 const std::vector<PairSample>& pairs,
                                 const std::string& target_space,
                                 const std::string& target_variable, const CodecModel* codec,
                                 const std::function<void(const TrainRecord&)>& on_epoch) {
  cfg.validate();
  sched.validate();
  if (target_space != "latent" && target_space != "raw")
    throw ConfigError("target space must be 'latent' or 'raw', got '" + target_space + "'");
  check_pairs(pairs, target_variable);

  const GridField& low0 = pairs.front().low;
  const GridField& high0 = pairs.front().high;

  DownscalerModel model;
  model.config = cfg;
  model.target_space = target_space;
  model.target_variable = target_variable;
  model.input_order = low0.variables;
  model.upscale_factor = high0.height() / low0.height();
  model.raw_patch = sched.raw_patch;
  if (static_cast<int>(model.input_order.size()) != cfg.in_channels)
    throw ConfigError("network expects " + std::to_string(cfg.in_channels) +
                      " input channels but the pairs carry " +
                      std::to_string(model.input_order.size()));

  std::vector<GridField> lows;
  lows.reserve(pairs.size());
  for (const auto& p : pairs) lows.push_back(p.low);
  model.input_stats = zscore_fit(lows, model.input_order);

  SampleSet samples;
  samples.inputs.reserve(pairs.size());
  samples.targets.reserve(pairs.size());

  if (target_space == "latent") {
    if (!codec) throw ConfigError("latent-space training needs a trained codec");
    if (cfg.out_channels != codec->config.latent_channels)
      throw ConfigError("out_channels " + std::to_string(cfg.out_channels) +
                        " does not match the codec's " +
                        std::to_string(codec->config.latent_channels) + " latent channels");
    auto [lh, lw] = latent_dims(codec->config, high0.height(), high0.width());
    for (const auto& p : pairs) {
      nn::Tensor x = assemble_input({p.low}, model.input_order, model.input_stats);
      if (x.height() != lh || x.width() != lw) x = nn::bilinear_resize(x, lh, lw);
      samples.inputs.push_back(std::move(x));
      LatentRepr latent = encode(*codec, select_channel(p.high, target_variable));
      samples.targets.push_back(std::move(latent.mu));
    }
  } else {
    if (cfg.out_channels != 1)
      throw ConfigError("raw-space training predicts one variable; out_channels must be 1");
    int patch = sched.raw_patch;
    if (patch > high0.height() || patch > high0.width())
      throw ConfigError("raw_patch " + std::to_string(patch) + " exceeds the truth grid");
    std::vector<GridField> highs;
    highs.reserve(pairs.size());
    for (const auto& p : pairs) highs.push_back(select_channel(p.high, target_variable));
    model.target_stats = zscore_fit(highs, target_variable);

    auto rows = patch_offsets(high0.height(), patch);
    auto cols = patch_offsets(high0.width(), patch);
    for (size_t i = 0; i < pairs.size(); ++i) {
      nn::Tensor x = assemble_input({pairs[i].low}, model.input_order, model.input_stats);
      x = nn::bilinear_resize(x, high0.height(), high0.width());
      GridField target_norm = zscore_apply(highs[i], model.target_stats);
      for (int r : rows)
        for (int c : cols) {
          samples.inputs.push_back(extract_tile(x, r, c, patch, patch));
          samples.targets.push_back(extract_tile(target_norm.values, r, c, patch, patch));
        }
    }
  }

  // Architecture guard: every working grid must survive the contraction path.
  model.net = nn::UNet<float>(cfg, nn::mix_seed(sched.seed, nn::hash_name("down_init")));
  model.net.check_dims(samples.inputs.front());

  char buf[64];
  std::snprintf(buf, sizeof(buf), "%" PRIu64, sched.seed);
  model.provenance["seed"] = buf;
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, model.fingerprint());
  model.provenance["config_fingerprint"] = buf;
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, channel_order_hash(model.input_order));
  model.provenance["input_order_hash"] = buf;

  train_loop(model, sched, samples, on_epoch);
  return model;
}

GridField downscale(const DownscalerModel& model, const GridField& low, const CodecModel* codec) {
  low.validate();
  for (const auto& name : model.input_order)
    if (low.variable_index(name) < 0)
      throw DataError("coarse input lacks channel '" + name + "'");

  int out_h = low.height() * model.upscale_factor;
  int out_w = low.width() * model.upscale_factor;

  if (model.target_space == "latent") {
    if (!codec) throw ConfigError("latent-space inference needs the codec");
    nn::Tensor x = assemble_input({low}, model.input_order, model.input_stats);
    auto [lh, lw] = latent_dims(codec->config, out_h, out_w);
    if (x.height() != lh || x.width() != lw) x = nn::bilinear_resize(x, lh, lw);

    typename nn::UNet<float>::Cache cache;
    nn::Tensor mu = model.net.forward(x, cache);

    LatentRepr latent;
    latent.mu = std::move(mu);
    latent.logvar = nn::Tensor(latent.mu.shape);
    latent.source_height = lh << codec->config.downsample_stages;
    latent.source_width = lw << codec->config.downsample_stages;
    latent.variables = {model.target_variable};
    latent.lat_range = low.lat_range;
    latent.lon_range = low.lon_range;
    latent.timestamp = low.timestamp;
    latent.codec_fingerprint = codec->fingerprint();
    return decode(*codec, latent);
  }

  nn::Tensor x = assemble_input({low}, model.input_order, model.input_stats);
  x = nn::bilinear_resize(x, out_h, out_w);

  PatchSet set;
  set.patch_h = model.raw_patch;
  set.patch_w = model.raw_patch;
  set.source_h = out_h;
  set.source_w = out_w;
  set.variables = {model.target_variable};
  set.lat_range = low.lat_range;
  set.lon_range = low.lon_range;
  set.timestamp = low.timestamp;
  auto rows = patch_offsets(out_h, model.raw_patch);
  auto cols = patch_offsets(out_w, model.raw_patch);
  for (int r : rows)
    for (int c : cols) {
      typename nn::UNet<float>::Cache cache;
      Patch tile;
      tile.row = r;
      tile.col = c;
      tile.values =
          model.net.forward(extract_tile(x, r, c, model.raw_patch, model.raw_patch), cache);
      set.patches.push_back(std::move(tile));
    }

  GridField assembled = unpatchify(set, model.raw_blend);
  return zscore_invert(assembled, model.target_stats);
}

SeamReport seam_check(const GridField& field, const std::string& variable, int patch_h,
                      int patch_w) {
  field.validate();
  int c = field.variable_index(variable);
  if (c < 0) throw DataError("missing variable '" + variable + "'");
  const int H = field.height(), W = field.width();
  const float* p = field.values.ptr() + static_cast<size_t>(c) * H * W;
  auto at = [&](int y, int x) { return static_cast<double>(p[static_cast<size_t>(y) * W + x]); };

  std::vector<bool> row_boundary(static_cast<size_t>(H), false);
  std::vector<bool> col_boundary(static_cast<size_t>(W), false);
  for (int o : patch_offsets(H, patch_h))
    if (o > 0) row_boundary[static_cast<size_t>(o)] = true;
  for (int o : patch_offsets(W, patch_w))
    if (o > 0) col_boundary[static_cast<size_t>(o)] = true;

  SeamReport report;
  std::vector<double> interior;
  interior.reserve(static_cast<size_t>(H) * W * 2);

  for (int y = 1; y < H; ++y) {
    double line_sum = 0.0;
    for (int x = 0; x < W; ++x) {
      double g = std::abs(at(y, x) - at(y - 1, x));
      if (row_boundary[static_cast<size_t>(y)]) {
        line_sum += g;
      } else {
        interior.push_back(g);
      }
    }
    if (row_boundary[static_cast<size_t>(y)]) {
      ++report.boundary_lines;
      report.boundary_max = std::max(report.boundary_max, line_sum / W);
    }
  }
  for (int x = 1; x < W; ++x) {
    double line_sum = 0.0;
    for (int y = 0; y < H; ++y) {
      double g = std::abs(at(y, x) - at(y, x - 1));
      if (col_boundary[static_cast<size_t>(x)]) {
        line_sum += g;
      } else {
        interior.push_back(g);
      }
    }
    if (col_boundary[static_cast<size_t>(x)]) {
      ++report.boundary_lines;
      report.boundary_max = std::max(report.boundary_max, line_sum / H);
    }
  }

  if (!interior.empty()) {
    std::sort(interior.begin(), interior.end());
    double pos = 0.999 * static_cast<double>(interior.size() - 1);
    size_t i = static_cast<size_t>(pos);
    double frac = pos - static_cast<double>(i);
    report.interior_p999 = i + 1 < interior.size()
                               ? interior[i] + frac * (interior[i + 1] - interior[i])
                               : interior.back();
  }
  report.spike = report.boundary_lines > 0 && report.boundary_max > report.interior_p999;
  return report;
}

}  // namespace latcomp
