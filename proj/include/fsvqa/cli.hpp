#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fsvqa/engine.hpp"

namespace fsvqa::cli {

enum ExitCode : int {
  kOk = 0,
  kValidationFailure = 1,
  kConfigError = 2,
  kIoError = 3,
};

/// Parsed run configuration file. Relative paths are resolved against the
/// config file's directory.
struct RunConfig {
  std::filesystem::path manifest;
  ExperimentConfig experiment;
  std::filesystem::path output_dir;
};

RunConfig read_run_config(const std::filesystem::path& path);

/// "0,1,2" -> {0, 1, 2}
std::vector<std::size_t> parse_token_list(const std::string& text);

int cmd_validate(const std::filesystem::path& manifest, std::ostream& out, std::ostream& err);
int cmd_run(const std::filesystem::path& config, std::optional<std::size_t> threads,
            std::optional<std::filesystem::path> out_dir, std::ostream& out, std::ostream& err);
int cmd_ablate(const std::filesystem::path& config, const std::string& tokens, std::optional<std::size_t> threads,
               std::optional<std::filesystem::path> out_dir, std::ostream& out, std::ostream& err);
int cmd_synth(const std::filesystem::path& config, const std::filesystem::path& out_dir, std::ostream& out,
              std::ostream& err);
int cmd_export(const std::filesystem::path& manifest, const std::string& spec, const std::filesystem::path& out_csv,
               std::ostream& out, std::ostream& err);

/// Full command-line entry point.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace fsvqa::cli
