#pragma once

#include <string>
#include <vector>

namespace bcsynth {

struct ProcessResult {
  bool started = false;  // false when the binary could not be spawned
  bool timed_out = false;
  int exit_code = -1;    // -1 when killed by a signal
  std::string out;
  std::string err;
  double wall_ms = 0.0;
};

// Runs argv[0] (searched on PATH) with `input` on stdin. The child is killed
// with SIGKILL once timeout_ms elapses.
ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input, int timeout_ms);

// Absolute path of an executable, searching PATH when name has no slash.
std::string find_executable(const std::string& name);

}  // namespace bcsynth
