#pragma once

#include <stdexcept>
#include <string>

namespace sok {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Contract violation on shapes, sizes or arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Operation applied to a spectrum in the wrong layout.
class LayoutError : public Error {
 public:
  using Error::Error;
};

/// Retained modes or generated frequencies exceed what the grid resolves.
class NyquistError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: rank deficiency, non-convergence, solvability.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File header disagrees with its payload.
class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace sok
