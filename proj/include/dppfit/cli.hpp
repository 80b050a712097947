#pragma once

#include <iosfwd>

namespace dppfit {

/// Subcommands simulate, summarize, fit, mc-study, asympt and validate.
/// Returns 0 on success, 1 on a usage error and 2 on a runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dppfit
