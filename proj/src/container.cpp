#include "latcomp/container.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace latcomp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void validate_finite(const GridField& f) {
  int64_t bad = 0;
  std::string first;
  for (int c = 0; c < f.channels(); ++c)
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x) {
        float v = f.values.at(c, y, x);
        if (!std::isfinite(v)) {
          if (bad == 0)
            first = "variable '" + f.variables[static_cast<size_t>(c)] + "' at (" +
                    std::to_string(y) + "," + std::to_string(x) + ")";
          ++bad;
        }
      }
  if (bad > 0)
    throw DataError(std::to_string(bad) + " non-finite cells, first in " + first);
}

// ---------------------------------------------------------------------------
// NetCDF classic (CDF-1 / CDF-2), big-endian, header + flat data section.

struct Cursor {
  const std::vector<uint8_t>& b;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > b.size()) throw IoError("truncated NetCDF header");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = (uint32_t(b[pos]) << 24) | (uint32_t(b[pos + 1]) << 16) |
                 (uint32_t(b[pos + 2]) << 8) | uint32_t(b[pos + 3]);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  std::string name() {
    uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
    pos += n;
    pos += (4 - n % 4) % 4;  // names are padded to 4-byte boundaries
    return s;
  }
};

enum NcType : uint32_t {
  NC_BYTE = 1,
  NC_CHAR = 2,
  NC_SHORT = 3,
  NC_INT = 4,
  NC_FLOAT = 5,
  NC_DOUBLE = 6,
};

size_t nc_type_size(uint32_t t) {
  switch (t) {
    case NC_BYTE:
    case NC_CHAR:
      return 1;
    case NC_SHORT:
      return 2;
    case NC_INT:
    case NC_FLOAT:
      return 4;
    case NC_DOUBLE:
      return 8;
    default:
      throw IoError("unknown NetCDF type code " + std::to_string(t));
  }
}

struct NcDim {
  std::string name;
  uint32_t length = 0;  // 0 marks the record (unlimited) dimension
};

struct NcVar {
  std::string name;
  std::vector<uint32_t> dimids;
  uint32_t type = 0;
  uint64_t vsize = 0;
  uint64_t begin = 0;
  bool is_record = false;
};

struct NcFile {
  uint32_t numrecs = 0;
  std::vector<NcDim> dims;
  std::vector<NcVar> vars;
  uint64_t record_stride = 0;
  const std::vector<uint8_t>* bytes = nullptr;

  const NcVar* find(const std::string& name) const {
    for (const auto& v : vars)
      if (v.name == name) return &v;
    return nullptr;
  }
};

void skip_attributes(Cursor& c) {
  uint32_t tag = c.u32();
  uint32_t count = c.u32();
  if (tag == 0 && count == 0) return;  // ABSENT
  if (tag != 0x0C) throw IoError("malformed NetCDF attribute list");
  for (uint32_t i = 0; i < count; ++i) {
    c.name();
    uint32_t type = c.u32();
    uint32_t nelems = c.u32();
    size_t bytes = nc_type_size(type) * nelems;
    bytes += (4 - bytes % 4) % 4;
    c.need(bytes);
    c.pos += bytes;
  }
}

NcFile parse_netcdf(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || bytes[0] != 'C' || bytes[1] != 'D' || bytes[2] != 'F')
    throw IoError("not a NetCDF classic file");
  uint8_t version = bytes[3];
  if (version != 1 && version != 2)
    throw IoError("unsupported NetCDF variant (only classic CDF-1/CDF-2 are readable)");

  NcFile nc;
  nc.bytes = &bytes;
  Cursor c{bytes, 4};
  nc.numrecs = c.u32();
  if (nc.numrecs == 0xFFFFFFFFu) throw IoError("streaming NetCDF files are not supported");

  uint32_t tag = c.u32();
  uint32_t ndims = c.u32();
  if (!(tag == 0x0A || (tag == 0 && ndims == 0))) throw IoError("malformed NetCDF dimension list");
  for (uint32_t i = 0; i < ndims; ++i) {
    NcDim d;
    d.name = c.name();
    d.length = c.u32();
    nc.dims.push_back(std::move(d));
  }

  skip_attributes(c);  // global attributes

  tag = c.u32();
  uint32_t nvars = c.u32();
  if (!(tag == 0x0B || (tag == 0 && nvars == 0))) throw IoError("malformed NetCDF variable list");
  for (uint32_t i = 0; i < nvars; ++i) {
    NcVar v;
    v.name = c.name();
    uint32_t nd = c.u32();
    for (uint32_t d = 0; d < nd; ++d) {
      uint32_t id = c.u32();
      if (id >= nc.dims.size()) throw IoError("NetCDF dimension id out of range");
      v.dimids.push_back(id);
    }
    skip_attributes(c);
    v.type = c.u32();
    v.vsize = c.u32();
    v.begin = version == 1 ? c.u32() : c.u64();
    v.is_record = !v.dimids.empty() && nc.dims[v.dimids[0]].length == 0;
    nc.vars.push_back(std::move(v));
  }

  for (const auto& v : nc.vars)
    if (v.is_record) nc.record_stride += v.vsize;
  return nc;
}

double nc_read_scalar(const std::vector<uint8_t>& b, size_t off, uint32_t type) {
  auto be = [&](size_t n) {
    if (off + n > b.size()) throw IoError("NetCDF data out of bounds");
    uint64_t v = 0;
    for (size_t i = 0; i < n; ++i) v = (v << 8) | b[off + i];
    return v;
  };
  switch (type) {
    case NC_BYTE:
      return static_cast<double>(static_cast<int8_t>(be(1)));
    case NC_CHAR:
      return static_cast<double>(static_cast<uint8_t>(be(1)));
    case NC_SHORT:
      return static_cast<double>(static_cast<int16_t>(be(2)));
    case NC_INT:
      return static_cast<double>(static_cast<int32_t>(be(4)));
    case NC_FLOAT:
      return static_cast<double>(std::bit_cast<float>(static_cast<uint32_t>(be(4))));
    case NC_DOUBLE:
      return std::bit_cast<double>(be(8));
    default:
      throw IoError("unknown NetCDF type code " + std::to_string(type));
  }
}

// Reads an entire non-record 1D variable (coordinate axes).
std::vector<double> nc_read_axis(const NcFile& nc, const NcVar& v) {
  if (v.dimids.size() != 1 || v.is_record) return {};
  uint32_t len = nc.dims[v.dimids[0]].length;
  std::vector<double> out(len);
  size_t ts = nc_type_size(v.type);
  for (uint32_t i = 0; i < len; ++i)
    out[i] = nc_read_scalar(*nc.bytes, static_cast<size_t>(v.begin) + i * ts, v.type);
  return out;
}

}  // namespace

GridField read_netcdf_classic(const std::string& path, const std::vector<std::string>& variables,
                              int time_index) {
  if (variables.empty()) throw DataError("NetCDF ingestion needs an explicit variable list");
  auto bytes = read_file(path);
  NcFile nc = parse_netcdf(bytes);

  GridField field;
  int H = -1, W = -1;
  std::string lat_dim, lon_dim;

  for (size_t ch = 0; ch < variables.size(); ++ch) {
    const std::string& name = variables[ch];
    const NcVar* v = nc.find(name);
    if (v == nullptr) throw DataError("missing variable '" + name + "' in " + path);

    std::vector<uint32_t> space(v->dimids);
    bool has_time = v->is_record;
    if (has_time) space.erase(space.begin());
    if (space.size() != 2)
      throw DataError("variable '" + name + "' is not a [lat,lon] or [time,lat,lon] grid");

    int vh = static_cast<int>(nc.dims[space[0]].length);
    int vw = static_cast<int>(nc.dims[space[1]].length);
    if (H < 0) {
      H = vh;
      W = vw;
      lat_dim = nc.dims[space[0]].name;
      lon_dim = nc.dims[space[1]].name;
      field.values = nn::Tensor({static_cast<int>(variables.size()), H, W});
    } else if (vh != H || vw != W) {
      throw DataError("shape mismatch between variables: '" + name + "' is " + std::to_string(vh) +
                      "x" + std::to_string(vw) + ", expected " + std::to_string(H) + "x" +
                      std::to_string(W));
    }

    if (has_time) {
      if (time_index < 0 || static_cast<uint32_t>(time_index) >= nc.numrecs)
        throw DataError("time index " + std::to_string(time_index) + " out of range (file has " +
                        std::to_string(nc.numrecs) + " records)");
    } else if (time_index != 0) {
      throw DataError("variable '" + name + "' has no time axis but time index " +
                      std::to_string(time_index) + " was requested");
    }

    size_t base = static_cast<size_t>(v->begin) +
                  (has_time ? static_cast<size_t>(time_index) * nc.record_stride : 0);
    size_t ts = nc_type_size(v->type);
    float* dst = field.values.ptr() + ch * static_cast<size_t>(H) * W;
    for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i)
      dst[i] = static_cast<float>(nc_read_scalar(bytes, base + static_cast<size_t>(i) * ts, v->type));
  }

  field.variables = variables;

  // Coordinate ranges from 1D axis variables named after the spatial dims.
  auto axis_range = [&](const std::string& dim) -> std::optional<std::pair<double, double>> {
    const NcVar* v = nc.find(dim);
    if (v == nullptr) return std::nullopt;
    auto axis = nc_read_axis(nc, *v);
    if (axis.size() < 2) return std::nullopt;
    return std::make_pair(std::min(axis.front(), axis.back()), std::max(axis.front(), axis.back()));
  };
  if (auto r = axis_range(lat_dim)) field.lat_range = *r;
  if (auto r = axis_range(lon_dim)) field.lon_range = *r;

  if (const NcVar* tv = nc.find("time"); tv != nullptr && tv->dimids.size() == 1) {
    size_t ts = nc_type_size(tv->type);
    size_t off = static_cast<size_t>(tv->begin);
    if (tv->is_record)
      off += static_cast<size_t>(time_index) * nc.record_stride;
    else
      off += static_cast<size_t>(time_index) * ts;
    field.timestamp = static_cast<int64_t>(nc_read_scalar(bytes, off, tv->type));
  }

  field.validate();
  validate_finite(field);
  return field;
}

void write_raw_container(const GridField& field, const std::string& path) {
  field.validate();
  json sidecar = {
      {"dims", {field.channels(), field.height(), field.width()}},
      {"variables", field.variables},
      {"lat_range", {field.lat_range.first, field.lat_range.second}},
      {"lon_range", {field.lon_range.first, field.lon_range.second}},
      {"timestamp", field.timestamp},
  };

  std::ofstream data(path, std::ios::binary | std::ios::trunc);
  if (!data) throw IoError("cannot write " + path);
  static_assert(std::endian::native == std::endian::little,
                "raw container writer assumes a little-endian host");
  data.write(reinterpret_cast<const char*>(field.values.ptr()),
             static_cast<std::streamsize>(field.values.size() * sizeof(float)));
  if (!data) throw IoError("short write to " + path);
  data.close();

  std::ofstream side(path + ".json", std::ios::trunc);
  if (!side) throw IoError("cannot write " + path + ".json");
  side << sidecar.dump(2) << "\n";
}

GridField read_raw_container(const std::string& path, const std::vector<std::string>& variables) {
  std::ifstream side(path + ".json");
  if (!side) throw IoError("missing sidecar " + path + ".json");
  json j;
  try {
    side >> j;
  } catch (const json::exception& e) {
    throw IoError("bad sidecar JSON for " + path + ": " + e.what());
  }

  GridField full;
  auto dims = j.at("dims").get<std::vector<int>>();
  if (dims.size() != 3) throw IoError("sidecar dims must be [C,H,W]");
  full.values = nn::Tensor({dims[0], dims[1], dims[2]});
  full.variables = j.at("variables").get<std::vector<std::string>>();
  auto latr = j.at("lat_range").get<std::vector<double>>();
  auto lonr = j.at("lon_range").get<std::vector<double>>();
  if (latr.size() != 2 || lonr.size() != 2) throw IoError("sidecar ranges must be pairs");
  full.lat_range = {latr[0], latr[1]};
  full.lon_range = {lonr[0], lonr[1]};
  full.timestamp = j.value("timestamp", int64_t(0));

  auto bytes = read_file(path);
  if (bytes.size() != static_cast<size_t>(full.values.size()) * sizeof(float))
    throw IoError("raw container " + path + " holds " + std::to_string(bytes.size()) +
                  " bytes, sidecar dims imply " +
                  std::to_string(full.values.size() * sizeof(float)));
  std::memcpy(full.values.ptr(), bytes.data(), bytes.size());
  full.validate();

  if (variables.empty()) {
    validate_finite(full);
    return full;
  }

  GridField out;
  out.values = nn::Tensor({static_cast<int>(variables.size()), full.height(), full.width()});
  out.variables = variables;
  out.lat_range = full.lat_range;
  out.lon_range = full.lon_range;
  out.timestamp = full.timestamp;
  size_t plane = static_cast<size_t>(full.height()) * full.width();
  for (size_t i = 0; i < variables.size(); ++i) {
    int c = full.variable_index(variables[i]);
    if (c < 0) throw DataError("missing variable '" + variables[i] + "' in " + path);
    std::copy_n(full.values.ptr() + static_cast<size_t>(c) * plane, plane,
                out.values.ptr() + i * plane);
  }
  validate_finite(out);
  return out;
}

GridField ingest_container(const std::string& path, const std::vector<std::string>& variables,
                           int time_index) {
  if (!fs::exists(path)) throw IoError("no such file: " + path);
  {
    std::ifstream probe(path, std::ios::binary);
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    if (probe.gcount() >= 4 && magic[0] == 'C' && magic[1] == 'D' && magic[2] == 'F')
      return read_netcdf_classic(path, variables, time_index);
  }
  if (fs::exists(path + ".json")) {
    if (time_index != 0)
      throw DataError("raw containers hold a single time step; time index must be 0");
    return read_raw_container(path, variables);
  }
  throw IoError(path + " is neither NetCDF classic nor a raw container with a sidecar");
}

}  // namespace latcomp
