#pragma once

#include <stdexcept>
#include <string>

namespace pn {

// Bad dimensions, out-of-range indices, malformed configuration.
class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// Singular systems, failed factorizations, non-finite values.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// A request that would exceed a configured memory/size cap.
class ResourceError : public std::runtime_error {
 public:
  explicit ResourceError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or schema-violating input documents.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

[[noreturn]] void throw_dimension_mismatch(const char* where, long expected, long got);

}  // namespace detail

}  // namespace pn
