#pragma once

#include <stdexcept>
#include <string>

namespace caminv {

// Shape or channel-count mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration value or unknown configuration key.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed records (manifest rows, score records, labels).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or other numeric breakdown during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corrupt or truncated file contents.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unknown-camera calibration could not be computed.
struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required upstream artifact (checkpoint, calibration, manifest) is absent.
struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace caminv
