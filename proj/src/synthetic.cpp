#include "latcomp/synthetic.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>

#include "latcomp/nn/rng.hpp"
#include "latcomp/variables.hpp"

namespace latcomp {

const std::vector<std::string>& forecast_input_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    const char* vars[] = {"U", "V", "Z", "T", "Q"};
    const int levels[] = {50, 200, 500, 700, 850, 925, 1000};
    for (const char* var : vars)
      for (int lev : levels) v.push_back(std::string(var) + std::to_string(lev));
    for (const char* s : {"T2M", "TP", "U10M", "V10M", "MSL"}) v.push_back(s);
    return v;
  }();
  return names;
}

std::vector<std::string> synthetic_channel_names(int n, const std::string& target) {
  if (n == 40) return forecast_input_names();
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    if (j == 0)
      names.push_back("SIG0");
    else if (j == 1 && target != "SIG0")
      names.push_back(target);
    else
      names.push_back("C" + std::to_string(j));
  }
  return names;
}

void SyntheticSpec::validate() const {
  if (height < 8 || width < 8)
    throw ConfigError("synthetic field dims must be at least 8x8, got " + std::to_string(height) +
                      "x" + std::to_string(width));
  if (!(beta >= 0.0)) throw ConfigError("spectral slope beta must be >= 0");
  if (!(amplitude > 0.0)) throw ConfigError("amplitude must be > 0");
  if (variable.empty()) throw ConfigError("synthetic spec needs a variable name");
}

namespace {

// A 2D field whose radial power decays as nu^-(beta+1) has a zonal (1D cut)
// spectrum decaying as k^-beta: integrating the 2D power over the meridional
// frequency costs one power. beta = 0 is special-cased to white noise so the
// zonal spectrum is exactly flat.
double spectral_amplitude(double nu, double beta) {
  if (beta == 0.0) return 1.0;
  return std::pow(nu, -0.5 * (beta + 1.0));
}

}  // namespace

GridField gen_grf(const SyntheticSpec& spec) {
  spec.validate();
  int H = spec.height, W = spec.width;
  size_t n = static_cast<size_t>(H) * W;

  std::vector<fftw_complex> freq(n), out(n);
  fftw_plan plan = fftw_plan_dft_2d(H, W, freq.data(), out.data(), FFTW_BACKWARD, FFTW_ESTIMATE);

  // Fill after planning: FFTW_ESTIMATE keeps arrays intact in practice, but
  // the API only guarantees it for FFTW_PRESERVE_INPUT plans.
  nn::Rng rng(nn::mix_seed(spec.seed, nn::hash_name(spec.variable)));
  for (int ky = 0; ky < H; ++ky) {
    int fy = ky <= H / 2 ? ky : ky - H;
    for (int kx = 0; kx < W; ++kx) {
      int fx = kx <= W / 2 ? kx : kx - W;
      size_t idx = static_cast<size_t>(ky) * W + kx;
      double re = rng.normal();
      double im = rng.normal();
      if (fx == 0 && fy == 0) {
        freq[idx][0] = 0.0;
        freq[idx][1] = 0.0;
        continue;
      }
      double nu = std::hypot(static_cast<double>(fx) / W, static_cast<double>(fy) / H);
      double amp = spectral_amplitude(nu, spec.beta);
      freq[idx][0] = re * amp;
      freq[idx][1] = im * amp;
    }
  }

  fftw_execute(plan);
  fftw_destroy_plan(plan);

  // Real part of the complex field, rescaled to the requested sample moments.
  std::vector<double> vals(n);
  double mean = 0.0;
  for (size_t i = 0; i < n; ++i) {
    vals[i] = out[i][0];
    mean += vals[i];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = vals[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  double std = std::sqrt(var);
  if (!(std > 0.0)) std = 1.0;

  GridField f;
  f.values = nn::Tensor({1, H, W});
  f.variables = {spec.variable};
  f.lat_range = spec.lat_range;
  f.lon_range = spec.lon_range;
  f.timestamp = spec.timestamp;
  for (size_t i = 0; i < n; ++i)
    f.values.data[i] =
        static_cast<float>((vals[i] - mean) / std * spec.amplitude + spec.mean_offset);
  return f;
}

nn::Tensor block_mean(const nn::Tensor& x, int f) {
  if (x.rank() != 3) throw DataError("block_mean expects [C,H,W]");
  if (f < 1) throw ConfigError("block size must be >= 1");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % f != 0 || W % f != 0)
    throw DataError("dims " + std::to_string(H) + "x" + std::to_string(W) +
                    " not divisible by block size " + std::to_string(f));
  int h = H / f, w = W / f;
  nn::Tensor out({C, h, w});
  double inv = 1.0 / (static_cast<double>(f) * f);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) acc += x.at(c, y * f + dy, xx * f + dx);
        out.at(c, y, xx) = static_cast<float>(acc * inv);
      }
  return out;
}

void PairSpec::validate() const {
  high_spec.validate();
  if (downsample_factor < 2) throw ConfigError("downsample factor must be >= 2");
  if (input_channels < 1) throw ConfigError("pair needs at least 1 input channel");
  if (high_spec.height % downsample_factor != 0 || high_spec.width % downsample_factor != 0)
    throw ConfigError("high-res dims " + std::to_string(high_spec.height) + "x" +
                      std::to_string(high_spec.width) + " not divisible by factor " +
                      std::to_string(downsample_factor));
}

namespace {

// Mixing weight of the shared signal in channel j. Channel 0 is almost pure
// signal (the subsampled forecast of the target), the channel named after
// the target variable is nearly as strong, the rest varies from useless to
// moderately informative.
double signal_weight(int j, bool is_target_channel) {
  if (j == 0) return 0.98;
  if (is_target_channel) return 0.95;
  return 0.15 * static_cast<double>(j % 5);
}

void normalize_in_place(std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  double std = std::sqrt(var);
  if (!(std > 0.0)) std = 1.0;
  for (double& x : v) x = (x - mean) / std;
}

}  // namespace

ForecastPair gen_forecast_pair(const PairSpec& pair) {
  pair.validate();
  int f = pair.downsample_factor;
  int h = pair.high_spec.height / f, w = pair.high_spec.width / f;
  size_t n = static_cast<size_t>(h) * w;

  ForecastPair result;
  result.high = gen_grf(pair.high_spec);

  nn::Tensor coarse = block_mean(result.high.values, f);
  std::vector<double> signal(coarse.data.begin(), coarse.data.end());
  normalize_in_place(signal);

  auto names = synthetic_channel_names(pair.input_channels, pair.high_spec.variable);
  int target_idx = -1;
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == pair.high_spec.variable) target_idx = static_cast<int>(i);

  result.low.values = nn::Tensor({pair.input_channels, h, w});
  result.low.variables = names;
  result.low.lat_range = result.high.lat_range;
  result.low.lon_range = result.high.lon_range;
  result.low.timestamp = result.high.timestamp;

  for (int j = 0; j < pair.input_channels; ++j) {
    SyntheticSpec dspec = pair.high_spec;
    dspec.height = h;
    dspec.width = w;
    dspec.amplitude = 1.0;
    dspec.mean_offset = 0.0;
    dspec.seed = nn::mix_seed(pair.mixing_seed, static_cast<uint64_t>(j));
    dspec.variable = names[static_cast<size_t>(j)];
    GridField distractor = gen_grf(dspec);
    std::vector<double> noise(distractor.values.data.begin(), distractor.values.data.end());
    normalize_in_place(noise);

    double alpha = signal_weight(j, j == target_idx);
    double beta_w = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
    // Distinct affine range per channel so normalization actually matters;
    // the signal-bearing channels keep the physical units of the high field.
    bool physical = j == 0 || j == target_idx;
    double scale = physical ? pair.high_spec.amplitude : 0.5 + 0.25 * static_cast<double>(j % 9);
    double offset = physical ? pair.high_spec.mean_offset : 3.0 * static_cast<double>(j % 7) - 9.0;

    float* dst = result.low.values.ptr() + static_cast<size_t>(j) * n;
    for (size_t i = 0; i < n; ++i)
      dst[i] = static_cast<float>((alpha * signal[i] + beta_w * noise[i]) * scale + offset);
  }
  result.low.validate();
  return result;
}

}  // namespace latcomp
