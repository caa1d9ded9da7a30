#pragma once

#include <stdexcept>
#include <string>

namespace knock {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidGeometry : public Error { using Error::Error; };
class OutOfBand : public Error { using Error::Error; };
class CoverageError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class ConfigurationError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class RankError : public Error { using Error::Error; };
class DegenerateFit : public Error { using Error::Error; };

/// Malformed text input. `row()` is 1-based; 0 when not row-specific.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row = 0)
      : Error(row ? what + " (row " + std::to_string(row) + ")" : what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class LoadError : public Error { using Error::Error; };
class UnsupportedMode : public LoadError { using LoadError::LoadError; };

}  // namespace knock
