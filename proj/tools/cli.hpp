#pragma once

// The koopnet command line: generate, train, eval, export and search.
// Commands live in a library so tests can drive them in-process.

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "koopnet/error.hpp"
#include "koopnet/training.hpp"

namespace koopnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad arguments or inputs that do not fit together; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kManifestFormatVersion = 1;

/// Everything needed to re-run a command and check its outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;  // arguments after the program name
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path -> content hash
  std::string status = "ok";
  std::string error;
  double wall_seconds = 0.0;

  void add_input(const std::filesystem::path& p);
  void add_output(const std::filesystem::path& p);
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);
  void write(const std::filesystem::path& path) const;
};

/// Contents of report.json written by `train`.
nlohmann::json report_to_json(const ExperimentConfig& cfg, const TrainReport& r);

/// Runs one command line (without the program name). Never throws; errors are
/// reported on `err` and through the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace koopnet::cli
