#include "pn/errors.hpp"

#include <sstream>

namespace pn::detail {

void throw_dimension_mismatch(const char* where, long expected, long got) {
  std::ostringstream msg;
  msg << where << ": dimension mismatch (expected " << expected << ", got " << got << ")";
  throw ArgumentError(msg.str());
}

}  // namespace pn::detail
