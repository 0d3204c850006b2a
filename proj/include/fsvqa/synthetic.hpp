#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsvqa/representation.hpp"
#include "fsvqa/store.hpp"

namespace fsvqa {

/// How strongly one tap encodes each latent factor, plus its per-element noise.
struct TapSignal {
  double content_weight = 1.0;
  double style_weight = 1.0;
  double noise_sigma = 0.0;
};

/// Two-factor latent model. Each class owns a content mean and a style mean,
/// drawn on spheres of radius `content_radius` / `style_radius` (radius 0
/// means the factor carries no class information). Images scatter around
/// their class means with `*_jitter` standard deviation. Every tap projects
/// its weighted factors through a fixed random matrix into the tap's hidden
/// width and repeats the result over its leading positions, adding
/// Gaussian noise per element. Separability is governed by radius / sigma.
struct SyntheticConfig {
  std::string name = "synthetic";
  std::size_t n_classes = 5;
  std::size_t images_per_class = 20;
  std::size_t content_dim = 8;
  std::size_t style_dim = 8;
  double content_radius = 1.0;
  double style_radius = 1.0;
  double content_jitter = 0.0;
  double style_jitter = 0.0;
  std::map<TapPoint, TapSignal> taps = {{TapPoint::VisualEncoder, {}},
                                        {TapPoint::QFormer, {}},
                                        {TapPoint::LlmEncoder, {}},
                                        {TapPoint::LlmDecoder, {}}};
  /// Leading extents; hidden widths are fixed at 1408 / 768 / 2048 / 2048.
  std::size_t visual_positions = 257;
  std::size_t qformer_queries = 32;
  std::size_t encoder_positions = 64;
  std::size_t beams = 5;
  std::size_t decoder_tokens = 12;
  /// Signal scale per decoder token; empty selects token_profile_peaked.
  std::vector<double> token_profile;
  std::uint64_t seed = 0;

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
  std::vector<double> effective_profile() const;
};

nlohmann::json to_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

/// Near-zero start token, peak at token 1, geometric decay afterwards.
std::vector<double> token_profile_peaked(std::size_t token_count);

/// Full tensor shape the generator emits for a tap.
EmbeddingTensor::Shape synthetic_shape(const SyntheticConfig& cfg, TapPoint tap);

struct SyntheticDataset {
  Dataset dataset;
  Manifest manifest;
};

/// Deterministic in cfg.seed; per-image randomness derives from (seed, image index).
SyntheticDataset generate(const SyntheticConfig& cfg);

/// generate() then write_dataset(); returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace fsvqa
