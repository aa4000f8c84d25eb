#pragma once

namespace ucast {

/// Entry point shared by the installed binary and the CLI tests.
/// Exit codes: 0 success, 2 bad usage or config, 3 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace ucast
