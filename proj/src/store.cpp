#include "fsvqa/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "fsvqa/prompt.hpp"

namespace fsvqa {

namespace fs = std::filesystem;

namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v), 4); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(get_le(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(get_le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get_le(4, what)); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(FormatErrc::Truncated, std::string("EMB1 file truncated while reading ") + what);
    }
  }

 private:
  std::uint64_t get_le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

struct TapContent {
  TapPoint tap;
  std::vector<StoredRecord> records;
};

/// Shared body of load_dataset and validate_dataset. In strict mode the first
/// content error throws; otherwise it is appended to report.problems.
LoadedDataset inspect(const fs::path& manifest_path, bool strict) {
  LoadedDataset out;
  auto& report = out.report;
  auto fail = [&](auto&& error) {
    if (strict) throw error;
    report.problems.emplace_back(error.what());
  };

  out.manifest = read_manifest(manifest_path);
  const auto& m = out.manifest;
  const auto base = manifest_path.parent_path();

  if (m.class_names.size() < 2) {
    fail(DataError("manifest lists " + std::to_string(m.class_names.size()) + " classes; at least 2 required"));
  } else {
    report.prompt_ok = m.prompt == build_mc_prompt(m.class_names);
    if (!report.prompt_ok) {
      fail(DataError("manifest prompt does not match the prompt rebuilt from its class names:\n  stored : \"" +
                     m.prompt + "\"\n  rebuilt: \"" + build_mc_prompt(m.class_names) + "\""));
    }
  }
  if (m.tap_files.empty()) fail(DataError("manifest names no tap files"));

  // Taps are visited in enum order whatever the manifest order was.
  std::vector<TapContent> contents;
  for (const auto& [tap, rel] : m.tap_files) {
    const auto path = resolve(base, rel);
    if (!fs::exists(path)) {
      report.missing_files.push_back(path.string());
      fail(IoError("tap file for " + std::string(tap_name(tap)) + " not found: " + path.string()));
      continue;
    }
    EmbeddingFile file;
    try {
      file = read_embeddings(path);
    } catch (const FormatError& e) {
      if (strict) throw;
      report.problems.push_back(path.string() + ": " + e.what());
      continue;
    }
    if (file.tap != tap) {
      fail(DataError(path.string() + " holds " + std::string(tap_name(file.tap)) + " records but is listed as " +
                     std::string(tap_name(tap))));
      continue;
    }
    report.record_counts[tap] = file.records.size();
    contents.push_back({tap, std::move(file.records)});
  }

  std::map<std::string, ImageActivations> joined;
  std::map<std::string, std::set<TapPoint>> seen;
  for (auto& content : contents) {
    for (auto& rec : content.records) {
      auto [it, inserted] = joined.try_emplace(rec.image_id);
      auto& img = it->second;
      if (inserted) {
        img.image_id = rec.image_id;
        img.class_id = rec.class_id;
      } else if (img.class_id != rec.class_id) {
        fail(DataError("image " + rec.image_id + " has class " + std::to_string(img.class_id) + " in one tap and " +
                       std::to_string(rec.class_id) + " in " + std::string(tap_name(content.tap))));
      }
      if (!seen[rec.image_id].insert(content.tap).second) {
        fail(DataError("image " + rec.image_id + " appears twice in the " + std::string(tap_name(content.tap)) +
                       " file"));
      }
      if (rec.class_id >= m.class_names.size()) {
        fail(DataError("image " + rec.image_id + " has class id " + std::to_string(rec.class_id) + " but only " +
                       std::to_string(m.class_names.size()) + " classes are named"));
      }
      img.taps.insert_or_assign(content.tap, std::move(rec.tensor));
    }
  }

  out.dataset.name = m.dataset;
  out.dataset.class_names = m.class_names;
  for (auto& [id, img] : joined) {
    std::vector<TapPoint> missing;
    for (const auto& [tap, rel] : m.tap_files) {
      if (!img.taps.contains(tap)) missing.push_back(tap);
    }
    if (!missing.empty()) {
      report.missing_taps.emplace(id, std::move(missing));
      continue;
    }
    if (auto zs = m.zero_shot_texts.find(id); zs != m.zero_shot_texts.end()) img.zero_shot_text = zs->second;
    out.dataset.images.push_back(std::move(img));
  }
  return out;
}

}  // namespace

std::string_view format_errc_name(FormatErrc code) {
  switch (code) {
    case FormatErrc::Io:
      return "io";
    case FormatErrc::BadMagic:
      return "bad-magic";
    case FormatErrc::UnsupportedVersion:
      return "unsupported-version";
    case FormatErrc::UnsupportedDtype:
      return "unsupported-dtype";
    case FormatErrc::BadTap:
      return "bad-tap";
    case FormatErrc::Truncated:
      return "truncated";
    case FormatErrc::CountMismatch:
      return "count-mismatch";
    case FormatErrc::BadRecord:
      return "bad-record";
    case FormatErrc::NonFinite:
      return "non-finite";
  }
  return "unknown";
}

std::vector<std::uint8_t> encode_embeddings(std::span<const StoredRecord> records, TapPoint tap) {
  if (records.size() > UINT32_MAX) throw FormatError(FormatErrc::BadRecord, "too many records for EMB1");
  ByteWriter w;
  w.bytes(std::string_view(kEmbMagic.data(), kEmbMagic.size()));
  w.u16(kEmbVersion);
  w.u8(static_cast<std::uint8_t>(tap));
  w.u32(static_cast<std::uint32_t>(records.size()));
  w.u8(kDtypeFloat32);
  for (const auto& rec : records) {
    if (rec.image_id.size() > UINT16_MAX) {
      throw FormatError(FormatErrc::BadRecord, "image id longer than 65535 bytes");
    }
    const auto& t = rec.tensor;
    if (t.empty() || t.rank() > UINT8_MAX) {
      throw FormatError(FormatErrc::BadRecord, "image " + rec.image_id + " has an unstorable tensor shape");
    }
    if (!t.all_finite()) {
      throw FormatError(FormatErrc::NonFinite, "image " + rec.image_id + " has a non-finite activation value");
    }
    w.u16(static_cast<std::uint16_t>(rec.image_id.size()));
    w.bytes(rec.image_id);
    w.u32(rec.class_id);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) {
      if (d > UINT32_MAX) throw FormatError(FormatErrc::BadRecord, "dimension too large in image " + rec.image_id);
      w.u32(static_cast<std::uint32_t>(d));
    }
    for (auto v : t.data()) w.f32(v);
  }
  return w.take();
}

EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() >= kEmbMagic.size() && !std::equal(kEmbMagic.begin(), kEmbMagic.end(), bytes.begin(),
                                                      [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    throw FormatError(FormatErrc::BadMagic, "not an EMB1 file (bad magic)");
  }
  r.str(kEmbMagic.size(), "magic");
  const auto version = r.u16("version");
  if (version != kEmbVersion) {
    throw FormatError(FormatErrc::UnsupportedVersion, "unsupported EMB1 version " + std::to_string(version));
  }
  const auto tap_code = r.u8("tap code");
  const auto tap = tap_from_code(tap_code);
  if (!tap) throw FormatError(FormatErrc::BadTap, "unknown tap code " + std::to_string(tap_code));
  const auto count = r.u32("record count");
  const auto dtype = r.u8("dtype");
  if (dtype != kDtypeFloat32) {
    throw FormatError(FormatErrc::UnsupportedDtype, "unsupported EMB1 dtype " + std::to_string(dtype));
  }

  EmbeddingFile file;
  file.tap = *tap;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (r.at_end()) {
      throw FormatError(FormatErrc::CountMismatch, "header declares " + std::to_string(count) +
                                                       " records but the file ends after " + std::to_string(i));
    }
    StoredRecord rec;
    const auto id_len = r.u16("image id length");
    rec.image_id = r.str(id_len, "image id");
    rec.class_id = r.u32("class id");
    const auto rank = r.u8("rank");
    if (rank == 0) throw FormatError(FormatErrc::BadRecord, "record " + rec.image_id + " has rank 0");
    EmbeddingTensor::Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32("dims");
      if (d == 0) throw FormatError(FormatErrc::BadRecord, "record " + rec.image_id + " has a zero dimension");
      if (n > r.remaining() / d) {
        throw FormatError(FormatErrc::Truncated, "EMB1 file truncated inside payload of " + rec.image_id);
      }
      n *= d;
    }
    r.need(n * sizeof(float), "payload");
    std::vector<float> data(n);
    for (auto& v : data) {
      v = r.f32("payload");
      if (!std::isfinite(v)) {
        throw FormatError(FormatErrc::NonFinite, "record " + rec.image_id + " contains a non-finite value");
      }
    }
    rec.tensor = EmbeddingTensor(std::move(shape), std::move(data));
    file.records.push_back(std::move(rec));
  }
  if (!r.at_end()) {
    throw FormatError(FormatErrc::CountMismatch, std::to_string(r.remaining()) + " trailing bytes after " +
                                                     std::to_string(count) + " declared records");
  }
  return file;
}

void write_embeddings(std::span<const StoredRecord> records, TapPoint tap, const fs::path& path) {
  const auto bytes = encode_embeddings(records, tap);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatErrc::Io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(FormatErrc::Io, "failed writing " + path.string());
}

EmbeddingFile read_embeddings(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatErrc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw FormatError(FormatErrc::Io, "failed reading " + path.string());
  try {
    return decode_embeddings(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.code(), path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json taps = nlohmann::json::object();
  for (const auto& [tap, file] : m.tap_files) taps[std::string(tap_name(tap))] = file;
  return {{"format", "EMB1-manifest"},
          {"version", kEmbVersion},
          {"dataset", m.dataset},
          {"class_names", m.class_names},
          {"prompt", m.prompt},
          {"taps", taps},
          {"extractor_model", m.extractor_model},
          {"decoder_semantics", m.decoder_semantics},
          {"extraction_params", m.extraction_params},
          {"zero_shot_texts", m.zero_shot_texts}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.dataset = j.value("dataset", std::string{});
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.prompt = j.at("prompt").get<std::string>();
    for (const auto& [name, file] : j.at("taps").items()) {
      auto tap = tap_from_name(name);
      if (!tap) throw DataError("manifest names unknown tap '" + name + "'");
      m.tap_files[*tap] = file.get<std::string>();
    }
    m.extractor_model = j.value("extractor_model", std::string{});
    m.decoder_semantics = j.value("decoder_semantics", std::string{});
    if (j.contains("extraction_params")) m.extraction_params = j.at("extraction_params");
    if (j.contains("zero_shot_texts") && !j.at("zero_shot_texts").is_null()) {
      m.zero_shot_texts = j.at("zero_shot_texts").get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return manifest_from_json(j);
}

void write_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << to_json(m).dump(2) << "\n";
  if (!f) throw IoError("failed writing " + path.string());
}

LoadedDataset load_dataset(const fs::path& manifest_path) { return inspect(manifest_path, true); }

CompletenessReport validate_dataset(const fs::path& manifest_path) { return inspect(manifest_path, false).report; }

fs::path write_dataset(const Dataset& ds, Manifest manifest, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<const ImageActivations*> sorted;
  for (const auto& img : ds.images) sorted.push_back(&img);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->image_id < b->image_id; });

  for (const auto& [tap, rel] : manifest.tap_files) {
    std::vector<StoredRecord> records;
    for (const auto* img : sorted) {
      if (auto it = img->taps.find(tap); it != img->taps.end()) {
        records.push_back({img->image_id, img->class_id, it->second});
      }
    }
    write_embeddings(records, tap, resolve(dir, rel));
  }
  for (const auto* img : sorted) {
    if (img->zero_shot_text) manifest.zero_shot_texts[img->image_id] = *img->zero_shot_text;
  }
  const auto path = dir / "manifest.json";
  write_manifest(manifest, path);
  return path;
}

}  // namespace fsvqa
