#pragma once

// basin-forge command line: compile, simulate, sweep, planar, render.
//
// Every command accepts --manifest run.json, a JSON object whose keys are the
// command's long option names; flags given on the command line override it.
// Exit codes: 0 ok, 1 unexpected failure, 2 validation, 3 integrator
// failure, 4 incomplete planar inventory.

#include <iosfwd>
#include <string>
#include <vector>

namespace basinforge::cli {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIntegrator = 3;
constexpr int kExitInventory = 4;

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace basinforge::cli
