#include "latcomp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "latcomp/nn/rng.hpp"

namespace latcomp {

using nlohmann::json;

int GridField::variable_index(const std::string& name) const {
  for (size_t i = 0; i < variables.size(); ++i)
    if (variables[i] == name) return static_cast<int>(i);
  return -1;
}

void GridField::validate() const {
  if (values.rank() != 3) throw DataError("field values must be [C,H,W], got " + values.shape_str());
  if (channels() < 1 || height() < 1 || width() < 1)
    throw DataError("field has empty dimension " + values.shape_str());
  if (static_cast<int>(variables.size()) != channels())
    throw DataError("field has " + std::to_string(channels()) + " channels but " +
                    std::to_string(variables.size()) + " variable names");
  std::set<std::string> seen(variables.begin(), variables.end());
  if (static_cast<int>(seen.size()) != channels()) throw DataError("duplicate variable names in field");
  if (!(lat_range.first < lat_range.second)) throw DataError("lat_range must be an ordered pair");
  if (!(lon_range.first < lon_range.second)) throw DataError("lon_range must be an ordered pair");
}

GridField make_field(nn::Tensor values, std::vector<std::string> variables,
                     std::pair<double, double> lat_range, std::pair<double, double> lon_range,
                     int64_t timestamp) {
  GridField f;
  f.values = std::move(values);
  f.variables = std::move(variables);
  f.lat_range = lat_range;
  f.lon_range = lon_range;
  f.timestamp = timestamp;
  f.validate();
  return f;
}

const NormStats::Entry& NormStats::at(const std::string& variable) const {
  auto it = by_variable.find(variable);
  if (it == by_variable.end()) throw DataError("no normalization stats for variable '" + variable + "'");
  return it->second;
}

std::string NormStats::to_json() const {
  json j = json::object();
  for (const auto& [name, e] : by_variable) {
    j[name] = {{"mean", e.mean}, {"std", e.std}, {"count", e.count}, {"degenerate", e.degenerate}};
  }
  return j.dump(2);
}

NormStats NormStats::from_json(const std::string& text) {
  NormStats s;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("bad normalization stats JSON: ") + e.what());
  }
  if (!j.is_object()) throw IoError("normalization stats JSON must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    Entry e;
    e.mean = it.value().at("mean").get<double>();
    e.std = it.value().at("std").get<double>();
    e.count = it.value().value("count", int64_t(0));
    e.degenerate = it.value().value("degenerate", false);
    if (!(e.std > 0.0)) throw IoError("non-positive std for variable '" + it.key() + "'");
    s.by_variable[it.key()] = e;
  }
  return s;
}

void NormStats::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << to_json() << "\n";
}

NormStats NormStats::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

uint64_t NormStats::content_hash() const { return nn::hash_name(to_json()); }

namespace {

struct Welford {
  int64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++count;
    double d = x - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (x - mean);
  }
};

}  // namespace

NormStats zscore_fit(const std::vector<GridField>& fields, const std::vector<std::string>& variables) {
  if (fields.empty()) throw DataError("zscore_fit needs at least one field");
  if (variables.empty()) throw DataError("zscore_fit needs at least one variable");

  NormStats stats;
  for (const auto& var : variables) {
    Welford w;
    for (size_t fi = 0; fi < fields.size(); ++fi) {
      const auto& f = fields[fi];
      int c = f.variable_index(var);
      if (c < 0)
        throw DataError("missing variable '" + var + "' in field " + std::to_string(fi));
      const float* p = f.values.ptr() + static_cast<size_t>(c) * f.height() * f.width();
      int64_t n = static_cast<int64_t>(f.height()) * f.width();
      for (int64_t i = 0; i < n; ++i) w.add(static_cast<double>(p[i]));
    }
    if (w.count < 2)
      throw DataError("variable '" + var + "' has " + std::to_string(w.count) +
                      " pixels, need at least 2 to fit statistics");
    NormStats::Entry e;
    e.mean = w.mean;
    e.count = w.count;
    double var_pop = w.m2 / static_cast<double>(w.count);
    e.std = std::sqrt(std::max(var_pop, 0.0));
    if (e.std < NormStats::kStdFloor) {
      e.std = NormStats::kStdFloor;
      e.degenerate = true;
    }
    stats.by_variable[var] = e;
  }
  return stats;
}

NormStats zscore_fit(const std::vector<GridField>& fields, const std::string& variable) {
  return zscore_fit(fields, std::vector<std::string>{variable});
}

namespace {

GridField zscore_map(const GridField& field, const NormStats& stats, bool invert) {
  field.validate();
  GridField out = field;
  for (int c = 0; c < field.channels(); ++c) {
    const auto& e = stats.at(field.variables[c]);
    float* p = out.values.ptr() + static_cast<size_t>(c) * field.height() * field.width();
    int64_t n = static_cast<int64_t>(field.height()) * field.width();
    for (int64_t i = 0; i < n; ++i) {
      double x = static_cast<double>(p[i]);
      p[i] = static_cast<float>(invert ? x * e.std + e.mean : (x - e.mean) / e.std);
    }
  }
  return out;
}

}  // namespace

GridField zscore_apply(const GridField& field, const NormStats& stats) {
  return zscore_map(field, stats, false);
}

GridField zscore_invert(const GridField& field, const NormStats& stats) {
  return zscore_map(field, stats, true);
}

std::vector<int> patch_offsets(int length, int p) {
  if (p < 1) throw ConfigError("patch size must be >= 1, got " + std::to_string(p));
  if (p > length)
    throw ConfigError("patch size " + std::to_string(p) + " exceeds field extent " +
                      std::to_string(length));
  int n = (length + p - 1) / p;
  std::vector<int> offsets(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) offsets[static_cast<size_t>(i)] = i * p;
  offsets.back() = length - p;
  return offsets;
}

std::pair<int, int> patch_grid(int height, int width, int ph, int pw) {
  return {static_cast<int>(patch_offsets(height, ph).size()),
          static_cast<int>(patch_offsets(width, pw).size())};
}

PatchSet patchify(const GridField& field, int ph, int pw) {
  field.validate();
  auto rows = patch_offsets(field.height(), ph);
  auto cols = patch_offsets(field.width(), pw);

  PatchSet set;
  set.patch_h = ph;
  set.patch_w = pw;
  set.source_h = field.height();
  set.source_w = field.width();
  set.variables = field.variables;
  set.lat_range = field.lat_range;
  set.lon_range = field.lon_range;
  set.timestamp = field.timestamp;
  set.patches.reserve(rows.size() * cols.size());

  int C = field.channels(), W = field.width();
  for (int r : rows) {
    for (int c : cols) {
      Patch patch;
      patch.row = r;
      patch.col = c;
      patch.values = nn::Tensor({C, ph, pw});
      for (int ch = 0; ch < C; ++ch) {
        const float* src = field.values.ptr() + (static_cast<size_t>(ch) * field.height() + r) * W + c;
        float* dst = patch.values.ptr() + static_cast<size_t>(ch) * ph * pw;
        for (int y = 0; y < ph; ++y)
          std::copy(src + static_cast<size_t>(y) * W, src + static_cast<size_t>(y) * W + pw,
                    dst + static_cast<size_t>(y) * pw);
      }
      set.patches.push_back(std::move(patch));
    }
  }
  return set;
}

namespace {

void check_patch_set(const PatchSet& set) {
  if (set.patches.empty()) throw DataError("patch set is empty");
  if (set.patch_h < 1 || set.patch_w < 1 || set.source_h < set.patch_h || set.source_w < set.patch_w)
    throw DataError("inconsistent patch set geometry");
  int C = static_cast<int>(set.variables.size());
  if (C < 1) throw DataError("patch set has no variables");
  for (const auto& p : set.patches) {
    if (p.values.rank() != 3 || p.values.dim(0) != C || p.values.dim(1) != set.patch_h ||
        p.values.dim(2) != set.patch_w)
      throw DataError("patch shape " + p.values.shape_str() + " does not match patch set");
    if (p.row < 0 || p.col < 0 || p.row + set.patch_h > set.source_h ||
        p.col + set.patch_w > set.source_w)
      throw DataError("patch at (" + std::to_string(p.row) + "," + std::to_string(p.col) +
                      ") extends outside the source field");
  }
}

// Tent weight along one axis: 1 at the border rising to p/2 mid-patch, so
// overlapping patches hand over smoothly instead of switching at the seam.
inline double tent(int t, int p) { return static_cast<double>(std::min(t + 1, p - t)); }

}  // namespace

std::vector<int> PatchSet::coverage() const {
  check_patch_set(*this);
  std::vector<int> cov(static_cast<size_t>(source_h) * source_w, 0);
  for (const auto& p : patches)
    for (int y = 0; y < patch_h; ++y)
      for (int x = 0; x < patch_w; ++x)
        cov[static_cast<size_t>(p.row + y) * source_w + (p.col + x)] += 1;
  return cov;
}

GridField unpatchify(const PatchSet& set, BlendMode mode) {
  check_patch_set(set);
  int C = static_cast<int>(set.variables.size());
  int H = set.source_h, W = set.source_w;

  std::vector<double> num(static_cast<size_t>(C) * H * W, 0.0);
  std::vector<double> den(static_cast<size_t>(H) * W, 0.0);

  for (const auto& p : set.patches) {
    for (int y = 0; y < set.patch_h; ++y) {
      double wy = mode == BlendMode::feather ? tent(y, set.patch_h) : 1.0;
      for (int x = 0; x < set.patch_w; ++x) {
        double w = wy * (mode == BlendMode::feather ? tent(x, set.patch_w) : 1.0);
        size_t pix = static_cast<size_t>(p.row + y) * W + (p.col + x);
        den[pix] += w;
        for (int ch = 0; ch < C; ++ch)
          num[static_cast<size_t>(ch) * H * W + pix] +=
              w * static_cast<double>(p.values.at(ch, y, x));
      }
    }
  }

  for (size_t pix = 0; pix < den.size(); ++pix)
    if (den[pix] == 0.0)
      throw DataError("coverage hole at pixel (" + std::to_string(pix / W) + "," +
                      std::to_string(pix % W) + "): no patch covers it");

  GridField out;
  out.values = nn::Tensor({C, H, W});
  out.variables = set.variables;
  out.lat_range = set.lat_range;
  out.lon_range = set.lon_range;
  out.timestamp = set.timestamp;
  for (int ch = 0; ch < C; ++ch) {
    float* dst = out.values.ptr() + static_cast<size_t>(ch) * H * W;
    const double* src = num.data() + static_cast<size_t>(ch) * H * W;
    for (size_t pix = 0; pix < den.size(); ++pix)
      dst[pix] = static_cast<float>(src[pix] / den[pix]);
  }
  return out;
}

}  // namespace latcomp
