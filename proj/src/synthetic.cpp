#include "fsvqa/synthetic.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "fsvqa/prompt.hpp"
#include "fsvqa/rng.hpp"

namespace fsvqa {

namespace {

enum Stream : std::uint64_t { kClassMean = 1, kProjection = 2, kLatent = 3, kNoise = 4 };

std::size_t hidden_width(TapPoint tap) {
  switch (tap) {
    case TapPoint::VisualEncoder:
      return 1408;
    case TapPoint::QFormer:
      return 768;
    case TapPoint::LlmEncoder:
    case TapPoint::LlmDecoder:
      return 2048;
  }
  return 0;
}

Eigen::VectorXd gaussian(std::mt19937_64& gen, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = normal(gen);
  return v;
}

Eigen::VectorXd sphere_point(std::uint64_t seed, Eigen::Index dim, double radius) {
  if (radius == 0.0) return Eigen::VectorXd::Zero(dim);
  std::mt19937_64 gen(seed);
  Eigen::VectorXd v = gaussian(gen, dim);
  while (v.norm() == 0.0) v = gaussian(gen, dim);
  return radius * v.normalized();
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("synthetic config: " + what);
}

}  // namespace

void SyntheticConfig::validate() const {
  check(n_classes >= 1, "n_classes must be >= 1");
  check(images_per_class >= 2, "images_per_class must be >= 2");
  check(content_dim >= 1 && style_dim >= 1, "factor dims must be >= 1");
  check(content_radius >= 0 && style_radius >= 0, "radii must be >= 0");
  check(content_jitter >= 0 && style_jitter >= 0, "jitter must be >= 0");
  check(visual_positions >= 1 && qformer_queries >= 1 && encoder_positions >= 1 && beams >= 1,
        "leading extents must be >= 1");
  check(decoder_tokens >= 2, "decoder_tokens must be >= 2");
  check(!taps.empty(), "at least one tap is required");
  for (const auto& [tap, sig] : taps) {
    check(sig.noise_sigma >= 0, std::string(tap_name(tap)) + " noise_sigma must be >= 0");
  }
  check(token_profile.empty() || token_profile.size() == decoder_tokens,
        "token_profile length " + std::to_string(token_profile.size()) + " != decoder_tokens " +
            std::to_string(decoder_tokens));
}

std::vector<double> SyntheticConfig::effective_profile() const {
  return token_profile.empty() ? token_profile_peaked(decoder_tokens) : token_profile;
}

std::vector<double> token_profile_peaked(std::size_t token_count) {
  if (token_count < 2) throw ConfigError("a token profile needs at least 2 tokens");
  std::vector<double> p(token_count);
  p[0] = 0.02;
  p[1] = 1.0;
  for (std::size_t j = 2; j < token_count; ++j) p[j] = 0.6 * std::pow(0.7, static_cast<double>(j - 2));
  return p;
}

EmbeddingTensor::Shape synthetic_shape(const SyntheticConfig& cfg, TapPoint tap) {
  switch (tap) {
    case TapPoint::VisualEncoder:
      return {cfg.visual_positions, hidden_width(tap)};
    case TapPoint::QFormer:
      return {1, cfg.qformer_queries, hidden_width(tap)};
    case TapPoint::LlmEncoder:
      return {cfg.encoder_positions, hidden_width(tap)};
    case TapPoint::LlmDecoder:
      return {cfg.beams, cfg.decoder_tokens, hidden_width(tap)};
  }
  return {};
}

SyntheticDataset generate(const SyntheticConfig& cfg) {
  cfg.validate();
  const auto dc = static_cast<Eigen::Index>(cfg.content_dim);
  const auto ds = static_cast<Eigen::Index>(cfg.style_dim);
  const auto profile = cfg.effective_profile();

  std::vector<Eigen::VectorXd> content_means, style_means;
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    content_means.push_back(sphere_point(derive_seed(cfg.seed, {kClassMean, 0, c}), dc, cfg.content_radius));
    style_means.push_back(sphere_point(derive_seed(cfg.seed, {kClassMean, 1, c}), ds, cfg.style_radius));
  }

  std::map<TapPoint, Eigen::MatrixXd> projections;
  for (const auto& [tap, sig] : cfg.taps) {
    std::mt19937_64 gen(derive_seed(cfg.seed, {kProjection, static_cast<std::uint64_t>(tap)}));
    Eigen::MatrixXd p(static_cast<Eigen::Index>(hidden_width(tap)), dc + ds);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dc + ds)));
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, j) = normal(gen);
    }
    projections.emplace(tap, std::move(p));
  }

  SyntheticDataset out;
  out.dataset.name = cfg.name;
  for (std::size_t c = 0; c < cfg.n_classes; ++c) out.dataset.class_names.push_back(fmt::format("class {}", c));

  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    for (std::size_t i = 0; i < cfg.images_per_class; ++i) {
      const std::uint64_t image_index = c * cfg.images_per_class + i;
      ImageActivations img;
      img.image_id = fmt::format("c{:03}_{:04}", c, i);
      img.class_id = static_cast<std::uint32_t>(c);

      std::mt19937_64 latent_gen(derive_seed(cfg.seed, {kLatent, image_index}));
      Eigen::VectorXd content = content_means[c] + cfg.content_jitter * gaussian(latent_gen, dc);
      Eigen::VectorXd style = style_means[c] + cfg.style_jitter * gaussian(latent_gen, ds);

      for (const auto& [tap, sig] : cfg.taps) {
        Eigen::VectorXd factors(dc + ds);
        factors << sig.content_weight * content, sig.style_weight * style;
        const Eigen::VectorXd signal = projections.at(tap) * factors;

        auto shape = synthetic_shape(cfg, tap);
        const auto hidden = shape.back();
        const auto rows = EmbeddingTensor::element_count(shape) / hidden;
        std::vector<float> data(rows * hidden);
        std::mt19937_64 noise_gen(derive_seed(cfg.seed, {kNoise, image_index, static_cast<std::uint64_t>(tap)}));
        std::normal_distribution<double> noise(0.0, 1.0);
        for (std::size_t r = 0; r < rows; ++r) {
          // Decoder rows run beam-major, so the token is r % tokens.
          const double scale = tap == TapPoint::LlmDecoder ? profile[r % cfg.decoder_tokens] : 1.0;
          for (std::size_t h = 0; h < hidden; ++h) {
            double v = scale * signal[static_cast<Eigen::Index>(h)];
            if (sig.noise_sigma > 0) v += sig.noise_sigma * noise(noise_gen);
            data[r * hidden + h] = static_cast<float>(v);
          }
        }
        img.taps.emplace(tap, EmbeddingTensor(std::move(shape), std::move(data)));
      }
      out.dataset.images.push_back(std::move(img));
    }
  }

  auto& m = out.manifest;
  m.dataset = cfg.name;
  m.class_names = out.dataset.class_names;
  m.prompt = cfg.n_classes >= 2 ? build_mc_prompt(m.class_names) : std::string{};
  for (const auto& [tap, sig] : cfg.taps) m.tap_files[tap] = std::string(tap_name(tap)) + ".emb";
  m.extractor_model = "synthetic-oracle";
  m.decoder_semantics = "beams x tokens x hidden";
  m.extraction_params = to_json(cfg);
  return out;
}

std::filesystem::path write_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.n_classes < 2) throw ConfigError("synthetic config: a written dataset needs n_classes >= 2");
  auto synth = generate(cfg);
  return write_dataset(synth.dataset, std::move(synth.manifest), out_dir);
}

nlohmann::json to_json(const SyntheticConfig& cfg) {
  nlohmann::json taps = nlohmann::json::object();
  for (const auto& [tap, sig] : cfg.taps) {
    taps[std::string(tap_name(tap))] = {
        {"content_weight", sig.content_weight}, {"style_weight", sig.style_weight}, {"noise_sigma", sig.noise_sigma}};
  }
  return {{"name", cfg.name},
          {"n_classes", cfg.n_classes},
          {"images_per_class", cfg.images_per_class},
          {"content_dim", cfg.content_dim},
          {"style_dim", cfg.style_dim},
          {"content_radius", cfg.content_radius},
          {"style_radius", cfg.style_radius},
          {"content_jitter", cfg.content_jitter},
          {"style_jitter", cfg.style_jitter},
          {"taps", taps},
          {"visual_positions", cfg.visual_positions},
          {"qformer_queries", cfg.qformer_queries},
          {"encoder_positions", cfg.encoder_positions},
          {"beams", cfg.beams},
          {"decoder_tokens", cfg.decoder_tokens},
          {"token_profile", cfg.token_profile},
          {"seed", cfg.seed}};
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig cfg;
  try {
    cfg.name = j.value("name", cfg.name);
    cfg.n_classes = j.value("n_classes", cfg.n_classes);
    cfg.images_per_class = j.value("images_per_class", cfg.images_per_class);
    cfg.content_dim = j.value("content_dim", cfg.content_dim);
    cfg.style_dim = j.value("style_dim", cfg.style_dim);
    cfg.content_radius = j.value("content_radius", cfg.content_radius);
    cfg.style_radius = j.value("style_radius", cfg.style_radius);
    cfg.content_jitter = j.value("content_jitter", cfg.content_jitter);
    cfg.style_jitter = j.value("style_jitter", cfg.style_jitter);
    if (j.contains("taps")) {
      cfg.taps.clear();
      for (const auto& [name, t] : j.at("taps").items()) {
        auto tap = tap_from_name(name);
        if (!tap) throw ConfigError("synthetic config: unknown tap '" + name + "'");
        TapSignal sig;
        sig.content_weight = t.value("content_weight", sig.content_weight);
        sig.style_weight = t.value("style_weight", sig.style_weight);
        sig.noise_sigma = t.value("noise_sigma", sig.noise_sigma);
        cfg.taps[*tap] = sig;
      }
    }
    cfg.visual_positions = j.value("visual_positions", cfg.visual_positions);
    cfg.qformer_queries = j.value("qformer_queries", cfg.qformer_queries);
    cfg.encoder_positions = j.value("encoder_positions", cfg.encoder_positions);
    cfg.beams = j.value("beams", cfg.beams);
    cfg.decoder_tokens = j.value("decoder_tokens", cfg.decoder_tokens);
    cfg.token_profile = j.value("token_profile", cfg.token_profile);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace fsvqa
