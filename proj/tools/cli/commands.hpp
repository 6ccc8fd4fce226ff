#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cli/config.hpp"

namespace iie::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitReplication = 3;
inline constexpr int kExitPositivity = 4;
inline constexpr int kExitVerify = 5;

// Maps a library error id to its exit code.
int exit_code_for(const std::string& error_id);

// Runs the command line (without the program name). Errors are reported on
// err as "error: <ID>: <message>" and mapped to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Individual commands; each writes its tables and manifest.json into
// cfg.output_dir and returns the exit code.
int cmd_simulate(const RunConfig& cfg, std::ostream& out);
int cmd_estimate(const RunConfig& cfg, std::ostream& out);
int cmd_bounds(const RunConfig& cfg, std::ostream& out);
int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_convergence(const RunConfig& cfg, std::ostream& out);

struct SampleExport {
  std::size_t n = 1000;
  std::string design = "dgp";  // dgp or selection
  double sigma = 10.0 / 3.0;
  std::string file;            // default <output>/sample.csv
};
int cmd_sample(const RunConfig& cfg, const SampleExport& opt, std::ostream& out);

struct TruthExport {
  double lo = -2.0;
  double hi = 4.0;
  int points = 121;
};
int cmd_truth(const RunConfig& cfg, const TruthExport& opt, std::ostream& out);

}  // namespace iie::cli
