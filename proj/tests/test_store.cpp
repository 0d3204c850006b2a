#include <gtest/gtest.h>

#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "fsvqa/prompt.hpp"
#include "fsvqa/store.hpp"
#include "test_helpers.hpp"

using namespace fsvqa;
using fsvqa::test::scratch_dir;

namespace fs = std::filesystem;

namespace {

std::vector<StoredRecord> random_records(std::mt19937_64& gen, std::size_t n) {
  std::vector<StoredRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rank = 1 + gen() % 3;
    EmbeddingTensor::Shape shape(rank);
    for (auto& d : shape) d = 1 + gen() % 6;
    std::string id = fmt::format("img-{}-", i);
    const std::size_t extra = gen() % 12;
    for (std::size_t c = 0; c < extra; ++c) id.push_back(static_cast<char>('a' + gen() % 26));
    out.push_back({id, static_cast<std::uint32_t>(gen()), fsvqa::test::random_tensor(gen, shape, 100.0f)});
  }
  return out;
}

ImageActivations image(const std::string& id, std::uint32_t cls, std::initializer_list<TapPoint> taps) {
  ImageActivations img;
  img.image_id = id;
  img.class_id = cls;
  for (auto t : taps) img.taps.emplace(t, EmbeddingTensor({2, 3}, {1, 2, 3, 4, 5, static_cast<float>(cls)}));
  return img;
}

Manifest two_class_manifest() {
  Manifest m;
  m.dataset = "pets";
  m.class_names = {"a black-and-white pet", "an in-color pet"};
  m.prompt = build_mc_prompt(m.class_names);
  m.tap_files = {{TapPoint::VisualEncoder, "visual.emb"}, {TapPoint::LlmDecoder, "decoder.emb"}};
  m.extractor_model = "test";
  return m;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void expect_code(std::span<const std::uint8_t> bytes, FormatErrc code) {
  try {
    decode_embeddings(bytes);
    ADD_FAILURE() << "expected " << format_errc_name(code);
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Emb1, GoldenBytesForSingleOne) {
  std::vector<StoredRecord> recs = {{"x", 7, EmbeddingTensor({1}, {1.0f})}};
  auto bytes = encode_embeddings(recs, TapPoint::LlmEncoder);
  const std::vector<std::uint8_t> want = {
      'E', 'M', 'B', '1', 0x01, 0x00,  // version 1
      0x02,                            // llm_encoder
      0x01, 0x00, 0x00, 0x00,          // one record
      0x00,                            // float32
      0x01, 0x00, 'x',                 // id
      0x07, 0x00, 0x00, 0x00,          // class 7
      0x01,                            // rank
      0x01, 0x00, 0x00, 0x00,          // dims
      0x00, 0x00, 0x80, 0x3f,          // 1.0f
  };
  EXPECT_EQ(bytes, want);
}

TEST(Emb1, FileRoundTrip) {
  auto dir = scratch_dir("emb_roundtrip");
  std::mt19937_64 gen(1);
  auto recs = random_records(gen, 25);
  write_embeddings(recs, TapPoint::QFormer, dir / "q.emb");
  auto file = read_embeddings(dir / "q.emb");
  EXPECT_EQ(file.tap, TapPoint::QFormer);
  EXPECT_EQ(file.records, recs);
}

TEST(Emb1, FuzzRoundTripBothDirections) {
  std::mt19937_64 gen(2);
  for (int round = 0; round < 20; ++round) {
    auto recs = random_records(gen, gen() % 50);
    auto tap = static_cast<TapPoint>(gen() % 4);
    auto bytes = encode_embeddings(recs, tap);
    auto decoded = decode_embeddings(bytes);
    EXPECT_EQ(decoded.records, recs);
    EXPECT_EQ(encode_embeddings(decoded.records, decoded.tap), bytes);
  }
}

TEST(Emb1, RejectsNonFiniteOnWrite) {
  std::vector<StoredRecord> recs = {{"ok", 0, EmbeddingTensor({2}, {1, 2})},
                                    {"bad_img", 0, EmbeddingTensor({2}, {1, std::numeric_limits<float>::quiet_NaN()})}};
  try {
    encode_embeddings(recs, TapPoint::VisualEncoder);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), FormatErrc::NonFinite);
    EXPECT_NE(std::string(e.what()).find("bad_img"), std::string::npos);
  }
  recs[1].tensor.mutable_data()[1] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(encode_embeddings(recs, TapPoint::VisualEncoder), FormatError);
}

TEST(Emb1, DistinctErrorsForCorruption) {
  std::vector<StoredRecord> recs = {{"a", 0, EmbeddingTensor({2, 2}, {1, 2, 3, 4})},
                                    {"b", 1, EmbeddingTensor({3}, {5, 6, 7})}};
  const auto good = encode_embeddings(recs, TapPoint::VisualEncoder);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  expect_code(bad_magic, FormatErrc::BadMagic);

  auto truncated = good;
  truncated.pop_back();
  expect_code(truncated, FormatErrc::Truncated);

  expect_code(std::span(good).first(7), FormatErrc::Truncated);

  auto bad_version = good;
  bad_version[4] = 9;
  expect_code(bad_version, FormatErrc::UnsupportedVersion);

  auto bad_dtype = good;
  bad_dtype[11] = 1;
  expect_code(bad_dtype, FormatErrc::UnsupportedDtype);

  auto bad_tap = good;
  bad_tap[6] = 4;
  expect_code(bad_tap, FormatErrc::BadTap);

  // Header claims three records; body holds two complete ones.
  auto short_count = good;
  short_count[7] = 3;
  expect_code(short_count, FormatErrc::CountMismatch);

  auto trailing = good;
  trailing.push_back(0);
  expect_code(trailing, FormatErrc::CountMismatch);

  auto nan_payload = good;
  nan_payload[nan_payload.size() - 1] = 0x7f;
  nan_payload[nan_payload.size() - 2] = 0xc0;
  expect_code(nan_payload, FormatErrc::NonFinite);
}

TEST(Emb1, MissingFileIsIoError) {
  try {
    read_embeddings("/nonexistent/dir/x.emb");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), FormatErrc::Io);
  }
}

TEST(Manifest, JsonRoundTrip) {
  auto m = two_class_manifest();
  m.zero_shot_texts = {{"i1", "a)"}};
  m.extraction_params = {{"beams", 5}};
  auto back = manifest_from_json(to_json(m));
  EXPECT_EQ(back.dataset, m.dataset);
  EXPECT_EQ(back.class_names, m.class_names);
  EXPECT_EQ(back.prompt, m.prompt);
  EXPECT_EQ(back.tap_files, m.tap_files);
  EXPECT_EQ(back.zero_shot_texts, m.zero_shot_texts);
  EXPECT_EQ(back.extraction_params, m.extraction_params);
}

TEST(LoadDataset, JoinsTapsAndAttachesText) {
  auto dir = scratch_dir("load_join");
  Dataset ds;
  ds.images = {image("i2", 1, {TapPoint::VisualEncoder, TapPoint::LlmDecoder}),
               image("i1", 0, {TapPoint::VisualEncoder, TapPoint::LlmDecoder})};
  ds.images[0].zero_shot_text = "b)";
  auto path = write_dataset(ds, two_class_manifest(), dir);
  auto loaded = load_dataset(path);
  ASSERT_EQ(loaded.dataset.images.size(), 2u);
  EXPECT_EQ(loaded.dataset.images[0].image_id, "i1");
  EXPECT_EQ(loaded.dataset.images[1].zero_shot_text, std::optional<std::string>("b)"));
  EXPECT_TRUE(loaded.report.consistent());
  EXPECT_EQ(loaded.report.record_counts.at(TapPoint::VisualEncoder), 2u);
  EXPECT_EQ(loaded.dataset.images[1].taps, ds.images[0].taps);
}

TEST(LoadDataset, PromptMismatchIsHardError) {
  auto dir = scratch_dir("load_prompt");
  Dataset ds;
  ds.images = {image("i1", 0, {TapPoint::VisualEncoder, TapPoint::LlmDecoder})};
  auto m = two_class_manifest();
  m.prompt = "Question: Is this a picture of a) a black-and-white pet or b) an RGB pet? Answer: ";
  auto path = write_dataset(ds, m, dir);
  EXPECT_THROW(load_dataset(path), DataError);
  auto report = validate_dataset(path);
  EXPECT_FALSE(report.prompt_ok);
  EXPECT_FALSE(report.consistent());
}

TEST(LoadDataset, DisjointTapsGiveEmptyDatasetAndReport) {
  auto dir = scratch_dir("load_disjoint");
  Dataset ds;
  ds.images = {image("v1", 0, {TapPoint::VisualEncoder}), image("d1", 1, {TapPoint::LlmDecoder})};
  auto path = write_dataset(ds, two_class_manifest(), dir);
  auto loaded = load_dataset(path);
  EXPECT_TRUE(loaded.dataset.images.empty());
  ASSERT_EQ(loaded.report.missing_taps.size(), 2u);
  EXPECT_EQ(loaded.report.missing_taps.at("v1"), (std::vector<TapPoint>{TapPoint::LlmDecoder}));
  EXPECT_EQ(loaded.report.missing_taps.at("d1"), (std::vector<TapPoint>{TapPoint::VisualEncoder}));
  EXPECT_FALSE(loaded.report.consistent());
}

TEST(LoadDataset, MissingFileAndClassConflicts) {
  auto dir = scratch_dir("load_missing");
  Dataset ds;
  ds.images = {image("i1", 0, {TapPoint::VisualEncoder, TapPoint::LlmDecoder})};
  auto path = write_dataset(ds, two_class_manifest(), dir);
  fs::remove(dir / "decoder.emb");
  EXPECT_THROW(load_dataset(path), IoError);
  auto report = validate_dataset(path);
  ASSERT_EQ(report.missing_files.size(), 1u);
  EXPECT_FALSE(report.consistent());

  // Same image with different classes in two taps.
  auto dir2 = scratch_dir("load_conflict");
  write_embeddings(std::vector<StoredRecord>{{"i1", 0, EmbeddingTensor({1, 2}, {1, 2})}}, TapPoint::VisualEncoder,
                   dir2 / "visual.emb");
  write_embeddings(std::vector<StoredRecord>{{"i1", 1, EmbeddingTensor({1, 1, 2}, {1, 2})}}, TapPoint::LlmDecoder,
                   dir2 / "decoder.emb");
  write_manifest(two_class_manifest(), dir2 / "manifest.json");
  EXPECT_THROW(load_dataset(dir2 / "manifest.json"), DataError);

  // Class id beyond the named classes.
  auto dir3 = scratch_dir("load_unknown_class");
  Dataset bad;
  bad.images = {image("i1", 5, {TapPoint::VisualEncoder, TapPoint::LlmDecoder})};
  EXPECT_THROW(load_dataset(write_dataset(bad, two_class_manifest(), dir3)), DataError);
}

TEST(LoadDataset, WrongTapInFileIsRejected) {
  auto dir = scratch_dir("load_wrong_tap");
  write_embeddings(std::vector<StoredRecord>{{"i1", 0, EmbeddingTensor({1, 2}, {1, 2})}}, TapPoint::QFormer,
                   dir / "visual.emb");
  write_embeddings(std::vector<StoredRecord>{{"i1", 0, EmbeddingTensor({1, 1, 2}, {1, 2})}}, TapPoint::LlmDecoder,
                   dir / "decoder.emb");
  write_manifest(two_class_manifest(), dir / "manifest.json");
  EXPECT_THROW(load_dataset(dir / "manifest.json"), DataError);
}

TEST(LoadDataset, IndependentOfManifestTapOrder) {
  auto dir = scratch_dir("load_order");
  Dataset ds;
  for (int i = 0; i < 6; ++i) {
    ds.images.push_back(image(fmt::format("i{}", i), static_cast<std::uint32_t>(i % 2),
                              {TapPoint::VisualEncoder, TapPoint::LlmDecoder}));
  }
  auto path = write_dataset(ds, two_class_manifest(), dir);
  // Rewrite the taps object in reverse key order.
  std::ifstream in(path);
  auto j = nlohmann::ordered_json::parse(in);
  nlohmann::ordered_json taps;
  taps["llm_decoder"] = "decoder.emb";
  taps["visual_encoder"] = "visual.emb";
  j["taps"] = taps;
  std::ofstream(dir / "reordered.json") << j.dump();
  auto a = load_dataset(path), b = load_dataset(dir / "reordered.json");
  ASSERT_EQ(a.dataset.images.size(), b.dataset.images.size());
  for (std::size_t i = 0; i < a.dataset.images.size(); ++i) {
    EXPECT_EQ(a.dataset.images[i].image_id, b.dataset.images[i].image_id);
    EXPECT_EQ(a.dataset.images[i].taps, b.dataset.images[i].taps);
  }
}
