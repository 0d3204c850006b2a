#pragma once

// Synthetic scenarios shared by the unit and acceptance suites.

#include "fsvqa/engine.hpp"
#include "fsvqa/synthetic.hpp"

namespace fsvqa::scenarios {

inline std::vector<RepresentationSpec> all_specs() {
  return {RepresentationSpec{RepresentationKind::Visual, 1}, RepresentationSpec{RepresentationKind::QFormer, 1},
          RepresentationSpec{RepresentationKind::LlmEncoder, 1}, RepresentationSpec{RepresentationKind::LlmDecoder, 1},
          RepresentationSpec{RepresentationKind::ConcatVisLlm, 1}};
}

/// Classes differ only in style. The visual tap sees per-image content and no
/// style, the decoder sees style only; no noise anywhere.
inline SyntheticConfig style_only_classes(std::uint64_t seed = 0) {
  SyntheticConfig c;
  c.name = "style-only";
  c.seed = seed;
  c.content_radius = 0.0;
  c.content_jitter = 1.0;
  c.style_radius = 1.0;
  c.style_jitter = 0.0;
  c.taps = {{TapPoint::VisualEncoder, {1.0, 0.0, 0.0}},
            {TapPoint::QFormer, {1.0, 0.5, 0.0}},
            {TapPoint::LlmEncoder, {1.0, 0.5, 0.0}},
            {TapPoint::LlmDecoder, {0.0, 1.0, 0.0}}};
  return c;
}

/// Both factors carry class information; every tap is noisy and images
/// scatter around their class means.
inline SyntheticConfig noisy_mixture(std::uint64_t seed = 0) {
  SyntheticConfig c;
  c.name = "noisy";
  c.seed = seed;
  c.content_jitter = 0.5;
  c.style_jitter = 0.5;
  for (auto& [tap, sig] : c.taps) sig.noise_sigma = 1.0;
  return c;
}

/// Decoder-only style signal with the peaked token profile and enough
/// noise that weaker tokens lose accuracy.
inline SyntheticConfig token_profile_ablation(std::uint64_t seed = 0, double sigma = 2.0) {
  SyntheticConfig c;
  c.name = "token-ablation";
  c.seed = seed;
  c.content_radius = 0.0;
  c.content_jitter = 1.0;
  c.style_jitter = 0.1;
  c.taps = {{TapPoint::LlmDecoder, {0.0, 1.0, sigma}}};
  c.decoder_tokens = 12;
  return c;
}

}  // namespace fsvqa::scenarios
