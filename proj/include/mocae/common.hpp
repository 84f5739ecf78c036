#pragma once
// Shared error types and small helpers used across the library.

#include <stdexcept>
#include <string>

namespace mocae {

// Shape/dimension mismatch between tensors or layers.
class ShapeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed or unsupported on-disk data (NIfTI, archives, checkpoints).
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value or combination.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss during optimization; carries where it happened.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(int epoch, int batch)
      : std::runtime_error("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch(epoch), batch(batch) {}
  int epoch;
  int batch;
};

enum class Mode { Train, Infer };

}  // namespace mocae
