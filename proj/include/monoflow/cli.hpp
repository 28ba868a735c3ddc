#pragma once

#include <string>
#include <vector>

namespace monoflow {

/// Exit codes: 0 all verdicts pass (or scenario expectations met), 1 violation,
/// 2 usage or parse error, 3 rule rejection.
int runCli(int argc, const char* const* argv);
int runCli(const std::vector<std::string>& args);

}  // namespace monoflow
