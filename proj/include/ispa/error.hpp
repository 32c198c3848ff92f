#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ispa {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (WAV, ISPF, CSV, JSON codebook).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Token text that does not match the ISPA-A grammar. `position()` is the
/// byte offset into the parsed text where the problem was detected.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace ispa
