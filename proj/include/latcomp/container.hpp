#pragma once

#include <string>
#include <vector>

#include "latcomp/grid.hpp"

namespace latcomp {

// Reads a gridded container into a GridField and validates every requested
// cell is finite. Two formats are recognized:
//   - NetCDF classic (CDF-1 / CDF-2 magic) with 2D [lat,lon] or
//     3D [time,lat,lon] numeric variables,
//   - raw little-endian float32 [C,H,W] with a JSON sidecar at <path>.json
//     holding {dims, variables, lat_range, lon_range, timestamp}.
// variables selects and orders the output channels; empty means all (raw
// format only). time_index picks the record for time-dependent variables and
// must be 0 for formats without a time axis.
GridField ingest_container(const std::string& path, const std::vector<std::string>& variables,
                           int time_index = 0);

// Raw float32 + sidecar writer/reader used for synthetic datasets.
void write_raw_container(const GridField& field, const std::string& path);
GridField read_raw_container(const std::string& path, const std::vector<std::string>& variables = {});

// NetCDF classic reader behind ingest_container, exposed for tests.
GridField read_netcdf_classic(const std::string& path, const std::vector<std::string>& variables,
                              int time_index = 0);

}  // namespace latcomp
