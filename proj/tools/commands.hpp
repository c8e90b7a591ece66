#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "difiv/config.hpp"
#include "difiv/io.hpp"
#include "difiv/metrics.hpp"

namespace difiv::cli {

// Process exit codes, one per error class.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,       // unexpected internal error
  kUsage = 2,         // bad command line
  kIo = 3,            // IoError, FormatError
  kInvalidInput = 4,  // DimensionError, ValueError
  kNumerical = 5,     // NumericalError
};

struct Log {
  std::ostream* out = nullptr;
  bool verbose = false;
  void info(const std::string& msg) const;
  void debug(const std::string& msg) const;
};

struct SimulateOptions {
  RunConfig cfg;
  std::string input;    // reference HRI; empty with synthetic = true
  std::string input_m;  // optional reference for the MI side
  bool synthetic = false;
  std::filesystem::path out_dir = ".";
};

struct FuseOptions {
  RunConfig cfg;
  std::filesystem::path y_h, y_m, manifest;
  std::filesystem::path out_dir = ".";
  bool baseline_bicubic = false;
};

struct DenoiseOptions {
  RunConfig cfg;
  std::filesystem::path input, output;
  std::filesystem::path checkpoint_in;   // inference only from a saved model
  std::filesystem::path checkpoint_out;  // save the trained model
};

struct EvalOptions {
  std::filesystem::path est, ref;
  std::size_t decim_factor = 4;  // HR/LR pixel ratio for ERGAS is decim_factor^2
  bool conventional_ergas = false;
  std::filesystem::path json_out;
  std::filesystem::path text_out;
};

struct RenderOptions {
  std::filesystem::path input, output;
  CompositeMode mode = CompositeMode::kVisible;
};

// File names written into the output directory.
inline constexpr const char* kYh = "Y_h.hsc";
inline constexpr const char* kYm = "Y_m.hsc";
inline constexpr const char* kZhRef = "Z_h_ref.hsc";
inline constexpr const char* kZmRef = "Z_m_ref.hsc";
inline constexpr const char* kManifest = "sensor.json";
inline constexpr const char* kZhHat = "Zh_hat.hsc";
inline constexpr const char* kZmHat = "Zm_hat.hsc";
inline constexpr const char* kTrace = "trace.log";
inline constexpr const char* kBicubic = "bicubic.hsc";

void cmd_simulate(const SimulateOptions& o, const Log& log);
FusionResult cmd_fuse(const FuseOptions& o, const Log& log);
void cmd_denoise(const DenoiseOptions& o, const Log& log);
MetricReport cmd_eval(const EvalOptions& o, const Log& log);
RenderReport cmd_render(const RenderOptions& o, const Log& log);

// Parses argv, runs the command, maps exceptions to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace difiv::cli
