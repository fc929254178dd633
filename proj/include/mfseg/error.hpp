#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace mfseg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid clustering parameters (bad k, non-positive c_f, zero metric weights...).
/// `field` names the offending parameter when there is one.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what, std::string field = {}) : Error(what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed or inconsistent input file. `offset` is the byte position of the
/// problem when one is known, -1 otherwise.
class IngestError : public Error {
 public:
  IngestError(const std::string& what, std::int64_t offset = -1)
      : Error(offset >= 0 ? what + " (at byte " + std::to_string(offset) + ")" : what),
        offset_(offset) {}

  std::int64_t offset() const noexcept { return offset_; }

 private:
  std::int64_t offset_;
};

/// Invalid synthetic dataset description.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Malformed center-table query.
class QueryError : public Error {
 public:
  using Error::Error;
};

}  // namespace mfseg
