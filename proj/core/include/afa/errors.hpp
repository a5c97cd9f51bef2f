#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace afa {

/// Malformed AFAP/AFAC input. `offset` is the byte position where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model configuration disagrees with the data or with an expected configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t iteration, std::size_t layer)
      : std::runtime_error("non-finite loss at iteration " + std::to_string(iteration) +
                           " in layer " + std::to_string(layer)),
        iteration_(iteration),
        layer_(layer) {}
  std::size_t iteration() const { return iteration_; }
  std::size_t layer() const { return layer_; }

 private:
  std::size_t iteration_;
  std::size_t layer_;
};

}  // namespace afa
