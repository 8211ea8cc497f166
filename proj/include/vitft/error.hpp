#pragma once

#include <stdexcept>
#include <string>

namespace vitft {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: configuration keys, shapes, out-of-range arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (open, short write, ...).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed container file. `kind()` tells the failure classes apart.
class ContainerError : public Error {
 public:
  enum class Kind {
    bad_magic,
    bad_version,
    truncated,
    bad_header,
    overlapping_tensors,
    misaligned_tensor,
    shape_mismatch,
    missing_tensor,
    bad_value,
  };

  ContainerError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace vitft
