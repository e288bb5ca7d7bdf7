#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace alea {

/// Invalid user-supplied configuration (bad flag, out-of-range option).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or degenerate data: bad split sizes, all-zero targets, corrupt files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shape or network-structure mismatch.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Loss or gradient became non-finite during training.
class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(std::size_t epoch, std::size_t batch, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": " + what),
        epoch_(epoch),
        batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace alea
