#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ssltext {

// Batch entry point behind the ssltext binary. `args` excludes the program
// name. Returns 0 on success, 1 on a pipeline error (message on err), 2 on
// a usage error. Every command writes a run manifest next to its outputs
// before any artifact, and identical invocations produce identical bytes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ssltext
