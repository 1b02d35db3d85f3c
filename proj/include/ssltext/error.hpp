#pragma once

#include <stdexcept>
#include <string>

namespace ssltext {

// All pipeline failures are reported through this type. Messages are
// prefixed with the owning module ("corpus: ...", "trainer: ...") so the
// CLI can surface them verbatim.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ssltext
