#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "latcomp/grid.hpp"

namespace latcomp {

// Recipe for one spectral-synthesis Gaussian random field. The measured
// zonal power spectrum of the result decays as k^-beta.
struct SyntheticSpec {
  int height = 256;
  int width = 256;
  double beta = 2.5;        // zonal spectral slope (power proportional to k^-beta)
  double amplitude = 1.0;   // sample standard deviation of the output
  double mean_offset = 0.0; // sample mean of the output
  uint64_t seed = 0;
  std::string variable = "T2M";
  std::pair<double, double> lat_range{15.0, 55.0};
  std::pair<double, double> lon_range{75.0, 135.0};
  int64_t timestamp = 0;

  void validate() const;  // H, W >= 8; beta >= 0; amplitude > 0
};

GridField gen_grf(const SyntheticSpec& spec);

// Recipe for one (coarse forecast, fine truth) sample. The high field comes
// from high_spec; the low field is a stack of input_channels coarse channels,
// each a linear mixture of the box-filtered, subsampled high field and an
// independent distractor field, so the coarse-to-fine mapping is learnable
// but not trivial.
struct PairSpec {
  SyntheticSpec high_spec;
  int downsample_factor = 8;
  int input_channels = 40;
  uint64_t mixing_seed = 0;

  void validate() const;  // factor >= 2; channels >= 1; dims divisible by factor
};

struct ForecastPair {
  GridField low;   // [input_channels, H/f, W/f]
  GridField high;  // [1, H, W]
};

ForecastPair gen_forecast_pair(const PairSpec& pair);

// Box-filter mean over f x f blocks; H and W must be divisible by f.
nn::Tensor block_mean(const nn::Tensor& x, int f);

}  // namespace latcomp
