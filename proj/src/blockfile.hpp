#pragma once

// Internal helper for the on-disk containers: a 4-byte magic, a u16 format
// version, a u32 header length, a JSON header, a raw payload, and a trailing
// CRC-32 over header+payload. Files are written to a sibling temp path and
// renamed into place so readers never observe a partial file.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace latcomp::detail {

void write_block_file(const std::string& path, const char magic[4], uint16_t version,
                      const nlohmann::json& header, const std::vector<uint8_t>& payload);

struct BlockFile {
  nlohmann::json header;
  std::vector<uint8_t> payload;
};

// `what` names the container kind in error messages ("model archive", ...).
BlockFile read_block_file(const std::string& path, const char magic[4], uint16_t version,
                          const char* what);

}  // namespace latcomp::detail
