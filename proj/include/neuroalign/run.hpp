#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "neuroalign/error.hpp"

namespace neuroalign {

// One CLI invocation. Commands: train, eval-fmri, eval-eeg, dims, report,
// synth.
struct RunSpec {
  std::string command;
  std::optional<std::filesystem::path> config_path;
  std::filesystem::path output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<std::string> subject;
  bool overwrite = false;
};

struct RunResult {
  std::filesystem::path run_dir;
};

// Work is staged in a hidden sibling directory and renamed into place on
// success; on failure the staging directory is removed and the error is
// rethrown. An existing output directory is never reused: the run goes to
// <out>_1, <out>_2, ... unless overwrite is set. `report` scans output_dir
// for runs and writes into <output_dir>/report.
RunResult run(const RunSpec& spec);

// 0 success, 2 config error, 3 data error, 4 runtime failure.
int exit_code(ErrorKind kind);

}  // namespace neuroalign
