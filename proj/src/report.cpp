#include "fsvqa/report.hpp"

#include <fstream>
#include <ostream>

#include <fmt/format.h>

namespace fsvqa {

namespace {

nlohmann::json cell_json(const CellResult& cell) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : cell.trials) {
    trials.push_back({{"seed", t.seed}, {"accuracy", t.accuracy}});
  }
  return {{"spec", cell.spec.name()}, {"k", cell.shots}, {"mean", cell.mean}, {"std", cell.std}, {"trials", trials}};
}

std::string percent_cell(const CellResult& cell) {
  return fmt::format("{:.2f} ± {:.2f}", 100.0 * cell.mean, 100.0 * cell.std);
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : cfg.specs) specs.push_back(s.name());
  return {{"dataset", cfg.dataset},
          {"specs", specs},
          {"shots", cfg.shots},
          {"trials", cfg.trials},
          {"k", cfg.options.neighbors},
          {"prototype", cfg.options.prototype_mode},
          {"eps", cfg.options.eps},
          {"seed", cfg.master_seed}};
}

nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) cells.push_back(cell_json(c));
  nlohmann::json out = {{"config", to_json(report.config)}, {"cells", cells}};
  if (report.zero_shot_accuracy) {
    out["zero_shot"] = {{"accuracy", *report.zero_shot_accuracy}, {"count", report.zero_shot_count}};
  } else {
    out["zero_shot"] = nullptr;
  }
  return out;
}

nlohmann::json to_json(const AblationReport& report) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& [idx, cells] : report.cells) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& c : cells) row.push_back(cell_json(c));
    tokens.push_back({{"token", idx}, {"cells", row}});
  }
  return {{"config", to_json(report.config)}, {"tokens", tokens}, {"skipped", report.skipped}};
}

void write_trials_csv(std::ostream& out, const ExperimentReport& report) {
  out << "spec,k,trial,accuracy\n";
  for (const auto& c : report.cells) {
    for (std::size_t i = 0; i < c.trials.size(); ++i) {
      out << fmt::format("{},{},{},{}\n", c.spec.name(), c.shots, i, c.trials[i].accuracy);
    }
  }
}

void write_ablation_csv(std::ostream& out, const AblationReport& report) {
  out << "token,k,trial,accuracy\n";
  for (const auto& [idx, cells] : report.cells) {
    for (const auto& c : cells) {
      for (std::size_t i = 0; i < c.trials.size(); ++i) {
        out << fmt::format("{},{},{},{}\n", idx, c.shots, i, c.trials[i].accuracy);
      }
    }
  }
}

std::string format_summary(const ExperimentReport& report) {
  const auto& cfg = report.config;
  std::string out = fmt::format("{:<18}", "representation");
  for (auto k : cfg.shots) out += fmt::format(" | {:>15}", fmt::format("{}-shot", k));
  if (report.zero_shot_accuracy) out += fmt::format(" | {:>8}", "ZSP");
  out += "\n";
  for (const auto& spec : cfg.specs) {
    out += fmt::format("{:<18}", spec.name());
    for (auto k : cfg.shots) {
      const auto* cell = report.find(spec, k);
      out += fmt::format(" | {:>15}", cell ? percent_cell(*cell) : std::string("-"));
    }
    if (report.zero_shot_accuracy) out += fmt::format(" | {:>8.2f}", 100.0 * *report.zero_shot_accuracy);
    out += "\n";
  }
  return out;
}

std::string format_ablation(const AblationReport& report) {
  std::string out = fmt::format("{:<6}", "token");
  for (auto k : report.config.shots) out += fmt::format(" | {:>15}", fmt::format("{}-shot", k));
  out += "\n";
  for (const auto& [idx, cells] : report.cells) {
    out += fmt::format("{:<6}", idx);
    for (const auto& c : cells) out += fmt::format(" | {:>15}", percent_cell(c));
    out += "\n";
  }
  for (auto idx : report.skipped) out += fmt::format("warning: token {} skipped (beyond shortest decoder output)\n", idx);
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << content;
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace fsvqa
