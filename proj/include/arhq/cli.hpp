#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace arhq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point shared by the `arhq` binary and the tests. args[0] is the
// program name. Returns 0 on success, 1 on runtime/data errors and 2 on
// usage or config errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace arhq::cli
