#pragma once

#include <iosfwd>

namespace afa {

/// Runs one `afa` subcommand. Returns 0 on success, 1 on usage or validation
/// errors and 2 on I/O or format errors.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace afa
