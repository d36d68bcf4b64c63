#include "blockfile.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "latcomp/errors.hpp"

namespace latcomp::detail {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container files assume a little-endian host");

uint32_t crc32_of(const uint8_t* data, size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<uint32_t>(crc32(crc, data, static_cast<uInt>(n)));
}

}  // namespace

void write_block_file(const std::string& path, const char magic[4], uint16_t version,
                      const nlohmann::json& header, const std::vector<uint8_t>& payload) {
  std::string header_text = header.dump();

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(header_text.data()),
              static_cast<uInt>(header_text.size()));
  crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
  uint32_t crc_value = static_cast<uint32_t>(crc);

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint32_t hlen = static_cast<uint32_t>(header_text.size());
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&crc_value), sizeof(crc_value));
    if (!out) throw IoError("short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' into place: " + ec.message());
}

BlockFile read_block_file(const std::string& path, const char magic[4], uint16_t version,
                          const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + sizeof(uint16_t) + sizeof(uint32_t) * 2)
    throw IoError("'" + path + "' is too short to be a " + std::string(what));
  if (std::memcmp(bytes.data(), magic, 4) != 0)
    throw IoError("'" + path + "' is not a " + std::string(what));
  uint16_t file_version;
  std::memcpy(&file_version, bytes.data() + 4, sizeof(file_version));
  if (file_version != version)
    throw IoError("unsupported " + std::string(what) + " version " +
                  std::to_string(file_version) + " in '" + path + "'");
  uint32_t hlen;
  std::memcpy(&hlen, bytes.data() + 6, sizeof(hlen));
  const size_t header_start = 10;
  if (header_start + hlen + sizeof(uint32_t) > bytes.size())
    throw IoError("'" + path + "' is truncated");

  size_t payload_start = header_start + hlen;
  size_t crc_pos = bytes.size() - sizeof(uint32_t);
  uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + crc_pos, sizeof(stored_crc));
  if (crc32_of(bytes.data() + header_start, crc_pos - header_start) != stored_crc)
    throw IntegrityError("checksum mismatch in '" + path + "'");

  BlockFile file;
  nlohmann::json parsed =
      nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_start),
                            bytes.begin() + static_cast<std::ptrdiff_t>(payload_start),
                            nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object())
    throw IoError("malformed header in '" + path + "'");
  file.header = std::move(parsed);
  file.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(payload_start),
                      bytes.begin() + static_cast<std::ptrdiff_t>(crc_pos));
  return file;
}

}  // namespace latcomp::detail
