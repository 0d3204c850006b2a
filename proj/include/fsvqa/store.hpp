#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsvqa/representation.hpp"

namespace fsvqa {

// EMB1 layout, all integers little-endian:
//   header : "EMB1" | u16 version | u8 tap code | u32 record count | u8 dtype
//   record : u16 id length | id bytes (UTF-8) | u32 class id | u8 rank
//            | u32 dims[rank] | f32 payload[prod(dims)], row-major
inline constexpr std::array<char, 4> kEmbMagic = {'E', 'M', 'B', '1'};
inline constexpr std::uint16_t kEmbVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 0;
inline constexpr std::size_t kEmbHeaderSize = 12;

enum class FormatErrc {
  Io,
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  BadTap,
  Truncated,
  CountMismatch,
  BadRecord,
  NonFinite,
};

std::string_view format_errc_name(FormatErrc code);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

struct StoredRecord {
  std::string image_id;
  std::uint32_t class_id = 0;
  EmbeddingTensor tensor;

  friend bool operator==(const StoredRecord&, const StoredRecord&) = default;
};

struct EmbeddingFile {
  TapPoint tap = TapPoint::VisualEncoder;
  std::vector<StoredRecord> records;
};

/// Serializes records; rejects non-finite payloads naming the image.
std::vector<std::uint8_t> encode_embeddings(std::span<const StoredRecord> records, TapPoint tap);
EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes);

void write_embeddings(std::span<const StoredRecord> records, TapPoint tap, const std::filesystem::path& path);
EmbeddingFile read_embeddings(const std::filesystem::path& path);

/// Dataset description written next to the tap files. Tap paths are relative
/// to the manifest's directory unless absolute.
struct Manifest {
  std::string dataset;
  std::vector<std::string> class_names;
  std::string prompt;
  std::map<TapPoint, std::string> tap_files;
  std::string extractor_model;
  std::string decoder_semantics;
  nlohmann::json extraction_params = nlohmann::json::object();
  std::map<std::string, std::string> zero_shot_texts;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

struct CompletenessReport {
  std::map<TapPoint, std::size_t> record_counts;
  /// image id -> taps it lacks.
  std::map<std::string, std::vector<TapPoint>> missing_taps;
  std::vector<std::string> missing_files;
  bool prompt_ok = false;
  std::vector<std::string> problems;

  bool consistent() const noexcept {
    return prompt_ok && missing_taps.empty() && missing_files.empty() && problems.empty();
  }
};

struct LoadedDataset {
  Manifest manifest;
  Dataset dataset;
  CompletenessReport report;
};

/// Joins the tap files on image id. Images lacking any manifest tap are left
/// out of the dataset and listed in the report. Prompt drift, missing files,
/// class disagreements and format errors throw.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

/// Same checks as load_dataset but collects every problem instead of
/// throwing on content errors.
CompletenessReport validate_dataset(const std::filesystem::path& manifest_path);

/// Writes one EMB1 file per manifest tap plus `manifest.json` into `dir`.
/// Zero-shot texts present on the images are copied into the manifest.
std::filesystem::path write_dataset(const Dataset& ds, Manifest manifest, const std::filesystem::path& dir);

}  // namespace fsvqa
