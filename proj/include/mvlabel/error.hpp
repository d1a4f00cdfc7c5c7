// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every mvlabel module.

#ifndef MVLABEL_ERROR_HPP
#define MVLABEL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mvlabel {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (PLY header, truncated payload, bad magic, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range or inconsistent numeric parameter.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Invalid combination of options (e.g. oracle segmenter without ground truth).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// External segmenter process misbehaved.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvlabel

#endif  // MVLABEL_ERROR_HPP
