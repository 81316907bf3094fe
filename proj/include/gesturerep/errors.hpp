#pragma once

#include <stdexcept>

namespace gesturerep {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input; the message names the file and line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary container with wrong magic, version or size.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cross-file reference problems (unknown ids, inconsistent speakers).
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegeneratePoseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Augmentation or config parameter outside its documented range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace gesturerep
