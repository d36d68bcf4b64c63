#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latcomp/errors.hpp"
#include "latcomp/nn/tensor.hpp"

namespace latcomp {

// A multi-variable field on a regular lat/lon grid at one timestamp.
// values is [C,H,W] float32; variables[c] names channel c.
struct GridField {
  nn::Tensor values;
  std::vector<std::string> variables;
  std::pair<double, double> lat_range{-90.0, 90.0};
  std::pair<double, double> lon_range{0.0, 360.0};
  int64_t timestamp = 0;  // seconds since epoch, UTC

  int channels() const { return values.empty() ? 0 : values.dim(0); }
  int height() const { return values.empty() ? 0 : values.dim(1); }
  int width() const { return values.empty() ? 0 : values.dim(2); }

  // Index of a variable's channel, or -1 when absent.
  int variable_index(const std::string& name) const;
  bool has_variable(const std::string& name) const { return variable_index(name) >= 0; }

  // Throws DataError unless shapes, variable list and ranges are consistent.
  void validate() const;
};

GridField make_field(nn::Tensor values, std::vector<std::string> variables,
                     std::pair<double, double> lat_range = {-90.0, 90.0},
                     std::pair<double, double> lon_range = {0.0, 360.0},
                     int64_t timestamp = 0);

// Per-variable normalization statistics. Means and stds are population
// statistics over every pixel of every field in the fitting set, carried in
// double so that fit -> apply -> invert round-trips stay tight in float32.
struct NormStats {
  struct Entry {
    double mean = 0.0;
    double std = 1.0;
    int64_t count = 0;
    bool degenerate = false;  // true when the raw std fell below kStdFloor
  };

  static constexpr double kStdFloor = 1e-6;

  std::map<std::string, Entry> by_variable;

  bool has(const std::string& variable) const { return by_variable.count(variable) > 0; }
  const Entry& at(const std::string& variable) const;

  std::string to_json() const;
  static NormStats from_json(const std::string& text);
  void save(const std::string& path) const;
  static NormStats load(const std::string& path);

  // FNV-1a hash of the canonical JSON form; archives store it so a latent
  // can be matched to the statistics it was normalized with.
  uint64_t content_hash() const;
};

// Fits statistics for the listed variables over all fields. Every field must
// carry every requested variable, and each variable needs at least two
// pixels in total.
NormStats zscore_fit(const std::vector<GridField>& fields,
                     const std::vector<std::string>& variables);
NormStats zscore_fit(const std::vector<GridField>& fields, const std::string& variable);

// (x - mean) / std per channel; inverse multiplies back. Both throw DataError
// when a field variable has no entry in the stats.
GridField zscore_apply(const GridField& field, const NormStats& stats);
GridField zscore_invert(const GridField& field, const NormStats& stats);

// One tile of a field. row/col are pixel offsets of the tile's top-left
// corner in the source field.
struct Patch {
  int row = 0;
  int col = 0;
  nn::Tensor values;  // [C,ph,pw]
};

// Patches plus everything needed to reassemble the source field.
struct PatchSet {
  std::vector<Patch> patches;
  int patch_h = 0;
  int patch_w = 0;
  int source_h = 0;
  int source_w = 0;
  std::vector<std::string> variables;
  std::pair<double, double> lat_range{-90.0, 90.0};
  std::pair<double, double> lon_range{0.0, 360.0};
  int64_t timestamp = 0;

  // How many patches cover each source pixel, flattened row-major [H*W].
  std::vector<int> coverage() const;
};

enum class BlendMode { average, feather };

// Tile start offsets along one axis: ceil(length/p) tiles, evenly spaced by
// p, with the last tile shifted inward so it ends exactly at the edge.
std::vector<int> patch_offsets(int length, int p);

// Number of (rows, cols) of tiles patchify would produce, without building them.
std::pair<int, int> patch_grid(int height, int width, int ph, int pw);

PatchSet patchify(const GridField& field, int ph, int pw);

// Reassembles a field. Overlapping pixels are blended: 'average' weights all
// contributors equally, 'feather' applies a tent weight that fades toward
// patch borders. Accumulation is in double and a pixel covered by exactly
// one patch reproduces its float32 value bit for bit.
GridField unpatchify(const PatchSet& set, BlendMode mode = BlendMode::feather);

}  // namespace latcomp
