#pragma once

#include <string>
#include <vector>

namespace cginv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitTheory = 3;

/// Entry point shared by the executable and the tests; args excludes argv[0].
int run(const std::vector<std::string>& args);

} // namespace cginv::cli
