// Copyright 2026 The pep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pep {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes, channel counts or resolutions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// User-supplied configuration, flags or data failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A persisted artifact (checkpoint, manifest) is corrupt or inconsistent.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File system or decoding failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pep
