#pragma once

#include <stdexcept>
#include <string>

namespace ncevo {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An invalid descriptor or parameter reached a constructor.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Matrix/vector dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss, gradient or weight.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t batch)
      : Error(what + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ")"),
        epoch_(epoch),
        batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// A configuration value is out of its legal range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data could not be loaded or does not satisfy a precondition.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace ncevo
