#pragma once

// Command-line front end: ingest, stats, synth, split, train, eval, ablate, report.

#include <iosfwd>
#include <string>
#include <vector>

namespace cellcount::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,   // bad flags, config values or model/tensor shapes
  kDataError = 3,     // unreadable or malformed inputs, missing stage artifacts
  kRuntimeError = 4,  // training divergence and anything else
};

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

}  // namespace cellcount::cli
