#pragma once

#include <stdexcept>
#include <string>

namespace dstrip {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, truncated header, bad model container).
class FormatError : public Error {
public:
  using Error::Error;
};

/// Well-formed input that uses a feature outside the supported subset.
class UnsupportedError : public Error {
public:
  using Error::Error;
};

class GeometryError : public Error {
public:
  using Error::Error;
};

class ParameterError : public Error {
public:
  using Error::Error;
};

/// Input for which the requested quantity is undefined (empty masks, zero denominators).
class DegenerateInputError : public Error {
public:
  using Error::Error;
};

class SchemaError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class TrainingError : public Error {
public:
  using Error::Error;
};

} // namespace dstrip
