#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fsvqa/tensor.hpp"

namespace fsvqa {

/// Capture points inside the VQA network. Integer codes are part of the EMB1 format.
enum class TapPoint : std::uint8_t {
  VisualEncoder = 0,
  QFormer = 1,
  LlmEncoder = 2,
  LlmDecoder = 3,
};

inline constexpr std::array<TapPoint, 4> kAllTaps = {TapPoint::VisualEncoder, TapPoint::QFormer,
                                                     TapPoint::LlmEncoder, TapPoint::LlmDecoder};

std::string_view tap_name(TapPoint tap);
std::optional<TapPoint> tap_from_name(std::string_view name);
std::optional<TapPoint> tap_from_code(std::uint8_t code);

enum class RepresentationKind {
  Visual,
  QFormer,
  LlmEncoder,
  LlmDecoder,
  ConcatVisLlm,
};

/// Which taps to pool and how to combine them into one feature vector.
struct RepresentationSpec {
  RepresentationKind kind = RepresentationKind::Visual;
  /// Decoder token position; position 0 holds the start token.
  std::size_t decoder_token_index = 1;

  bool uses_decoder() const noexcept {
    return kind == RepresentationKind::LlmDecoder || kind == RepresentationKind::ConcatVisLlm;
  }

  /// Stable text form: "visual", "qformer", "llm_encoder", "llm_decoder",
  /// "concat_vis_llm"; decoder kinds with a non-default token carry "@<index>".
  std::string name() const;
  static RepresentationSpec parse(std::string_view text);

  friend bool operator==(const RepresentationSpec&, const RepresentationSpec&) = default;
};

std::vector<TapPoint> required_taps(const RepresentationSpec& spec);

/// Feature dimension produced from BLIP-2 (ViT-L/14 + Flan-T5-XL) activations.
std::size_t nominal_dim(RepresentationKind kind);

struct ImageActivations {
  std::string image_id;
  std::uint32_t class_id = 0;
  std::map<TapPoint, EmbeddingTensor> taps;
  std::optional<std::string> zero_shot_text;

  /// Throws DataError naming the tap and image when absent.
  const EmbeddingTensor& tap(TapPoint t) const;
};

/// An image set with its ordered class names. Images are kept sorted by id.
struct Dataset {
  std::string name;
  std::vector<std::string> class_names;
  std::vector<ImageActivations> images;
};

/// beams x tokens x hidden -> beams x hidden at one token position.
EmbeddingTensor select_decoder_token(const EmbeddingTensor& t, std::size_t token_index);

EmbeddingVector build_representation(const ImageActivations& acts, const RepresentationSpec& spec);

}  // namespace fsvqa
