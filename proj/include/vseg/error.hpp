#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace vseg {

/// Domain error thrown by every operation in this library. The message is the
/// contract: callers (and the CLI) surface it verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds an Error message from stream-insertable pieces and throws.
template <typename... Parts>
[[noreturn]] void fail(Parts&&... parts) {
  std::ostringstream os;
  (os << ... << std::forward<Parts>(parts));
  throw Error(os.str());
}

template <typename... Parts>
void require(bool condition, Parts&&... parts) {
  if (!condition) {
    fail(std::forward<Parts>(parts)...);
  }
}

}  // namespace vseg
