#pragma once

#include <stdexcept>
#include <string>

namespace latcomp {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad preset name, out-of-range hyperparameter,
// malformed config file. CLI maps this to exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Training diverged or was interrupted. Carries a reference to the last
// checkpoint written so a caller can resume or inspect. Exit code 3.
struct TrainAbort : Error {
  std::string last_checkpoint;
  TrainAbort(const std::string& msg, std::string checkpoint)
      : Error(msg), last_checkpoint(std::move(checkpoint)) {}
};

// Problems with the data itself: non-finite cells, missing variables,
// shape mismatches, coverage holes, mismatched pair sets. Exit code 4.
struct DataError : Error {
  using Error::Error;
};

// File-level problems: unreadable file, bad magic, truncated payload.
struct IoError : Error {
  using Error::Error;
};

// Stored checksum or fingerprint does not match the recomputed one.
struct IntegrityError : IoError {
  using IoError::IoError;
};

}  // namespace latcomp
