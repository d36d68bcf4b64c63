#pragma once

#include <string>

#include "latcomp/codec.hpp"
#include "latcomp/downscale.hpp"

namespace latcomp {

// Self-describing model archives: a JSON header carrying the architecture
// config, normalization statistics, loss history and provenance, followed by
// the raw float32 parameter blob, CRC-protected. Loading rebuilds the
// network from the stored config alone and refuses files whose parameter
// inventory or config fingerprint disagrees with their own header.
void save_codec_checkpoint(const CodecModel& model, const std::string& path);
CodecModel load_codec_checkpoint(const std::string& path);

void save_downscaler_checkpoint(const DownscalerModel& model, const std::string& path);
DownscalerModel load_downscaler_checkpoint(const std::string& path);

// Kind tag ("codec" or "downscaler") read from the header without loading
// the parameters; IoError when the file is not a model archive.
std::string checkpoint_kind(const std::string& path);

}  // namespace latcomp
