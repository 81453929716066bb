#pragma once

#include <string>
#include <vector>

namespace crpl {

// Command-line front end. Subcommands: synth | train | eval | ablate-augment
// | ablate-ensemble | compare-backbones | bench. Returns the process exit
// code: 0 success, 1 runtime failure, 2 usage error.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace crpl
