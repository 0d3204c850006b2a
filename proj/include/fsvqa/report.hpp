#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "fsvqa/engine.hpp"

namespace fsvqa {

nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const ExperimentReport& report);
nlohmann::json to_json(const AblationReport& report);

/// Tidy per-trial rows: spec,k,trial,accuracy
void write_trials_csv(std::ostream& out, const ExperimentReport& report);
/// token,k,trial,accuracy
void write_ablation_csv(std::ostream& out, const AblationReport& report);

/// Rows are representations, columns shot counts, cells "mean ± std" in
/// percent; a ZSP column is added when decoded text was available.
std::string format_summary(const ExperimentReport& report);
std::string format_ablation(const AblationReport& report);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace fsvqa
