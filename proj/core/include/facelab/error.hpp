#pragma once

#include <stdexcept>
#include <string>

namespace facelab {

// Base for every error raised by the library. Subclasses let callers
// distinguish malformed input from contract violations without parsing
// messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File content does not follow its documented format (bad magic, truncated
// record, malformed line).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Tensor, matrix or parameter dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value is outside its documented domain.
class ValueError : public Error {
 public:
  using Error::Error;
};

// A named entity (registry key, embedding key, identity) was not found.
class LookupError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Message prefix "path:line: " used by every line-oriented parser.
std::string at_line(const std::string& path, std::size_t line);

}  // namespace facelab
