#include "fsvqa/representation.hpp"

#include <charconv>

namespace fsvqa {

namespace {

constexpr std::array<std::string_view, 4> kTapNames = {"visual_encoder", "qformer", "llm_encoder", "llm_decoder"};

struct KindName {
  RepresentationKind kind;
  std::string_view name;
};

constexpr std::array<KindName, 5> kKindNames = {{
    {RepresentationKind::Visual, "visual"},
    {RepresentationKind::QFormer, "qformer"},
    {RepresentationKind::LlmEncoder, "llm_encoder"},
    {RepresentationKind::LlmDecoder, "llm_decoder"},
    {RepresentationKind::ConcatVisLlm, "concat_vis_llm"},
}};

EmbeddingVector pooled_tap(const ImageActivations& acts, TapPoint tap) {
  const auto& t = acts.tap(tap);
  if (t.rank() < 2) {
    throw ShapeError("tap " + std::string(tap_name(tap)) + " of image " + acts.image_id + " has rank " +
                     std::to_string(t.rank()) + ", expected >= 2");
  }
  return mean_pool_except_last(t);
}

EmbeddingVector pooled_decoder(const ImageActivations& acts, std::size_t token_index) {
  const auto& t = acts.tap(TapPoint::LlmDecoder);
  if (t.rank() != 3) {
    throw ShapeError("decoder tap of image " + acts.image_id + " has shape " + t.shape_string() +
                     ", expected beams x tokens x hidden");
  }
  return mean_pool_except_last(select_decoder_token(t, token_index));
}

}  // namespace

std::string_view tap_name(TapPoint tap) { return kTapNames.at(static_cast<std::size_t>(tap)); }

std::optional<TapPoint> tap_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kTapNames.size(); ++i) {
    if (kTapNames[i] == name) return static_cast<TapPoint>(i);
  }
  return std::nullopt;
}

std::optional<TapPoint> tap_from_code(std::uint8_t code) {
  if (code < kAllTaps.size()) return static_cast<TapPoint>(code);
  return std::nullopt;
}

std::string RepresentationSpec::name() const {
  std::string out;
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) out = kn.name;
  }
  if (uses_decoder() && decoder_token_index != 1) {
    out += "@" + std::to_string(decoder_token_index);
  }
  return out;
}

RepresentationSpec RepresentationSpec::parse(std::string_view text) {
  auto at = text.find('@');
  auto base = text.substr(0, at);
  RepresentationSpec spec;
  bool found = false;
  for (const auto& kn : kKindNames) {
    if (kn.name == base) {
      spec.kind = kn.kind;
      found = true;
    }
  }
  if (!found) {
    throw ConfigError("unknown representation '" + std::string(text) +
                      "' (expected visual, qformer, llm_encoder, llm_decoder or concat_vis_llm)");
  }
  if (at != std::string_view::npos) {
    if (!spec.uses_decoder()) {
      throw ConfigError("token index only applies to decoder representations: '" + std::string(text) + "'");
    }
    auto digits = text.substr(at + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), spec.decoder_token_index);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
      throw ConfigError("bad token index in '" + std::string(text) + "'");
    }
  }
  return spec;
}

std::vector<TapPoint> required_taps(const RepresentationSpec& spec) {
  switch (spec.kind) {
    case RepresentationKind::Visual:
      return {TapPoint::VisualEncoder};
    case RepresentationKind::QFormer:
      return {TapPoint::QFormer};
    case RepresentationKind::LlmEncoder:
      return {TapPoint::LlmEncoder};
    case RepresentationKind::LlmDecoder:
      return {TapPoint::LlmDecoder};
    case RepresentationKind::ConcatVisLlm:
      return {TapPoint::LlmDecoder, TapPoint::VisualEncoder};
  }
  return {};
}

std::size_t nominal_dim(RepresentationKind kind) {
  switch (kind) {
    case RepresentationKind::Visual:
      return 1408;
    case RepresentationKind::QFormer:
      return 768;
    case RepresentationKind::LlmEncoder:
    case RepresentationKind::LlmDecoder:
      return 2048;
    case RepresentationKind::ConcatVisLlm:
      return 2048 + 1408;
  }
  return 0;
}

const EmbeddingTensor& ImageActivations::tap(TapPoint t) const {
  auto it = taps.find(t);
  if (it == taps.end()) {
    throw DataError("image " + image_id + " has no " + std::string(tap_name(t)) + " activation");
  }
  return it->second;
}

EmbeddingTensor select_decoder_token(const EmbeddingTensor& t, std::size_t token_index) {
  if (t.rank() != 3) {
    throw ShapeError("decoder slicing needs a rank-3 tensor, got " + t.shape_string());
  }
  const auto beams = t.shape()[0];
  const auto tokens = t.shape()[1];
  const auto hidden = t.shape()[2];
  if (token_index >= tokens) {
    throw RangeError("decoder token index " + std::to_string(token_index) + " out of range: tensor has " +
                     std::to_string(tokens) + " tokens");
  }
  std::vector<float> out;
  out.reserve(beams * hidden);
  auto data = t.data();
  for (std::size_t b = 0; b < beams; ++b) {
    auto first = data.begin() + static_cast<std::ptrdiff_t>((b * tokens + token_index) * hidden);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(hidden));
  }
  return EmbeddingTensor({beams, hidden}, std::move(out));
}

EmbeddingVector build_representation(const ImageActivations& acts, const RepresentationSpec& spec) {
  switch (spec.kind) {
    case RepresentationKind::Visual:
      return pooled_tap(acts, TapPoint::VisualEncoder);
    case RepresentationKind::QFormer:
      return pooled_tap(acts, TapPoint::QFormer);
    case RepresentationKind::LlmEncoder:
      return pooled_tap(acts, TapPoint::LlmEncoder);
    case RepresentationKind::LlmDecoder:
      return pooled_decoder(acts, spec.decoder_token_index);
    case RepresentationKind::ConcatVisLlm:
      return concat(pooled_decoder(acts, spec.decoder_token_index), pooled_tap(acts, TapPoint::VisualEncoder));
  }
  throw ConfigError("unhandled representation kind");
}

}  // namespace fsvqa
