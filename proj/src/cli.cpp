#include "fsvqa/cli.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fsvqa/report.hpp"
#include "fsvqa/store.hpp"
#include "fsvqa/synthetic.hpp"

namespace fsvqa::cli {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

/// Runs a command body and maps exceptions onto exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const FormatError& e) {
    err << "format error (" << format_errc_name(e.code()) << "): " << e.what() << "\n";
    return e.code() == FormatErrc::Io ? kIoError : kValidationFailure;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
}

void write_csv(const fs::path& path, const std::string& body) { write_text_file(path, body); }

}  // namespace

RunConfig read_run_config(const fs::path& path) {
  const auto j = read_json(path);
  const auto base = path.parent_path();
  RunConfig rc;
  auto& e = rc.experiment;
  try {
    rc.manifest = resolve(base, j.at("manifest").get<std::string>());
    std::vector<std::string> specs =
        j.value("specs", std::vector<std::string>{"visual", "qformer", "llm_encoder", "llm_decoder", "concat_vis_llm"});
    for (const auto& s : specs) e.specs.push_back(RepresentationSpec::parse(s));
    e.shots = j.value("shots", e.shots);
    e.trials = j.value("trials", e.trials);
    e.options.neighbors = j.value("k", e.options.neighbors);
    e.options.prototype_mode = j.value("prototype", e.options.prototype_mode);
    e.options.eps = j.value("eps", e.options.eps);
    e.master_seed = j.value("seed", e.master_seed);
    e.threads = j.value("threads", e.threads);
    rc.output_dir = resolve(base, j.value("output_dir", std::string("out")));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
  e.validate();
  return rc;
}

std::vector<std::size_t> parse_token_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("bad token list '" + text + "' (expected comma-separated non-negative integers)");
    }
    out.push_back(std::stoul(item));
  }
  if (out.empty()) throw ConfigError("empty token list");
  return out;
}

int cmd_validate(const fs::path& manifest, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto report = validate_dataset(manifest);
    out << "manifest: " << manifest.string() << "\n";
    for (const auto& [tap, n] : report.record_counts) out << fmt::format("  {:<15} {} records\n", tap_name(tap), n);
    out << "prompt: " << (report.prompt_ok ? "verified" : "MISMATCH") << "\n";
    for (const auto& f : report.missing_files) out << "missing file: " << f << "\n";
    for (const auto& [id, taps] : report.missing_taps) {
      std::string names;
      for (auto t : taps) names += (names.empty() ? "" : ",") + std::string(tap_name(t));
      out << "incomplete image: " << id << " lacks " << names << "\n";
    }
    for (const auto& p : report.problems) out << "problem: " << p << "\n";
    const bool ok = report.consistent();
    out << (ok ? "OK" : "INVALID") << "\n";
    return ok ? kOk : kValidationFailure;
  });
}

int cmd_run(const fs::path& config, std::optional<std::size_t> threads, std::optional<fs::path> out_dir,
            std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto rc = read_run_config(config);
    if (threads) rc.experiment.threads = *threads;
    if (out_dir) rc.output_dir = *out_dir;
    const auto loaded = load_dataset(rc.manifest);
    rc.experiment.dataset = loaded.dataset.name;
    const auto report = run_experiment(rc.experiment, loaded.dataset);

    fs::create_directories(rc.output_dir);
    write_text_file(rc.output_dir / "report.json", to_json(report).dump(2) + "\n");
    std::ostringstream csv;
    write_trials_csv(csv, report);
    write_csv(rc.output_dir / "report.csv", csv.str());

    out << fmt::format("dataset {} | {} images | {} trials per cell\n", loaded.dataset.name,
                       loaded.dataset.images.size(), rc.experiment.trials);
    out << format_summary(report);
    if (!loaded.report.missing_taps.empty()) {
      out << fmt::format("note: {} incomplete images excluded\n", loaded.report.missing_taps.size());
    }
    return kOk;
  });
}

int cmd_ablate(const fs::path& config, const std::string& tokens, std::optional<std::size_t> threads,
               std::optional<fs::path> out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto rc = read_run_config(config);
    const auto indices = parse_token_list(tokens);
    if (threads) rc.experiment.threads = *threads;
    if (out_dir) rc.output_dir = *out_dir;
    const auto loaded = load_dataset(rc.manifest);
    rc.experiment.dataset = loaded.dataset.name;
    const auto report = slice_ablation(rc.experiment, loaded.dataset, indices);

    fs::create_directories(rc.output_dir);
    write_text_file(rc.output_dir / "ablation.json", to_json(report).dump(2) + "\n");
    std::ostringstream csv;
    write_ablation_csv(csv, report);
    write_csv(rc.output_dir / "ablation.csv", csv.str());
    out << format_ablation(report);
    return kOk;
  });
}

int cmd_synth(const fs::path& config, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = synthetic_config_from_json(read_json(config));
    const auto manifest = write_synthetic(cfg, out_dir);
    out << fmt::format("wrote {} images x {} classes to {}\n", cfg.images_per_class, cfg.n_classes,
                       manifest.string());
    return kOk;
  });
}

int cmd_export(const fs::path& manifest, const std::string& spec_name, const fs::path& out_csv, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    const auto spec = RepresentationSpec::parse(spec_name);
    const auto loaded = load_dataset(manifest);
    for (const auto& [id, taps] : loaded.report.missing_taps) {
      for (auto t : taps) {
        for (auto need : required_taps(spec)) {
          if (t == need) throw DataError("image " + id + " lacks the " + std::string(tap_name(t)) + " tap");
        }
      }
    }
    const auto features = build_features(loaded.dataset, spec);

    std::string body = "image_id,class_id";
    for (Eigen::Index j = 0; j < features.rows.cols(); ++j) body += fmt::format(",f{}", j);
    body += "\n";
    for (std::size_t i = 0; i < features.image_ids.size(); ++i) {
      body += features.image_ids[i];
      body += fmt::format(",{}", features.class_ids[i]);
      const auto row = features.rows.row(static_cast<Eigen::Index>(i));
      for (Eigen::Index j = 0; j < row.size(); ++j) body += fmt::format(",{}", row[j]);
      body += "\n";
    }
    write_csv(out_csv, body);
    out << fmt::format("wrote {} rows x {} features to {}\n", features.image_ids.size(), features.rows.cols(),
                       out_csv.string());
    return kOk;
  });
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot classification from prompt-steered VQA activations"};
  app.require_subcommand(1);

  std::string manifest, config, tokens, spec, out_path;
  std::size_t threads = 0;

  auto* validate = app.add_subcommand("validate", "Check a dataset manifest and its tap files");
  validate->add_option("manifest", manifest, "Manifest JSON")->required();

  auto* run = app.add_subcommand("run", "Run the episodic few-shot experiment");
  run->add_option("config", config, "Run config JSON")->required();
  run->add_option("--threads", threads, "Worker cap (results do not depend on it)");
  run->add_option("--out", out_path, "Output directory (overrides config)");

  auto* ablate = app.add_subcommand("ablate", "Decoder token-slice ablation");
  ablate->add_option("config", config, "Run config JSON")->required();
  ablate->add_option("--tokens", tokens, "Comma-separated token indices")->required();
  ablate->add_option("--threads", threads, "Worker cap");
  ablate->add_option("--out", out_path, "Output directory (overrides config)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic activation dataset");
  synth->add_option("config", config, "Synthetic config JSON")->required();
  synth->add_option("--out", out_path, "Output directory")->required();

  auto* exp = app.add_subcommand("export", "Export per-image feature vectors as CSV");
  exp->add_option("manifest", manifest, "Manifest JSON")->required();
  exp->add_option("--spec", spec, "Representation name")->required();
  exp->add_option("--out", out_path, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg, emsg;
    const int code = app.exit(e, msg, emsg);
    out << msg.str();
    err << emsg.str();
    return code == 0 ? kOk : kConfigError;
  }

  const auto thread_opt = threads ? std::optional<std::size_t>(threads) : std::nullopt;
  const auto out_opt = out_path.empty() ? std::nullopt : std::optional<fs::path>(out_path);
  if (*validate) return cmd_validate(manifest, out, err);
  if (*run) return cmd_run(config, thread_opt, out_opt, out, err);
  if (*ablate) return cmd_ablate(config, tokens, thread_opt, out_opt, out, err);
  if (*synth) return cmd_synth(config, out_path, out, err);
  return cmd_export(manifest, spec, out_path, out, err);
}

}  // namespace fsvqa::cli
