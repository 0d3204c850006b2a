#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fsvqa/representation.hpp"
#include "fsvqa/tensor.hpp"

namespace fsvqa {

/// class id -> image ids of that class.
using ClassIndex = std::map<std::uint32_t, std::vector<std::string>>;

/// Builds the class index of a dataset; ids within a class are sorted so
/// sampling does not depend on image order.
ClassIndex class_index(const Dataset& ds);

/// One k-shot split: k train ids per class, the rest held out for testing.
struct Episode {
  std::uint64_t seed = 0;
  std::size_t shots = 0;
  ClassIndex train;
  ClassIndex test;

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Draws k train ids per class uniformly without replacement. Every class
/// needs at least k + 1 images so that one is left for testing.
Episode sample_episode(const ClassIndex& classes, std::size_t shots, std::uint64_t seed);

/// Labelled reference vectors in normalized space, one per row. In prototype
/// mode there is one row per class (the class mean); in exemplar mode every
/// train vector is its own row.
struct PrototypeSet {
  std::vector<std::uint32_t> labels;
  Eigen::MatrixXd vectors;
  NormStats stats;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Mean of each class's raw vectors, then normalized with `test_stats`.
PrototypeSet build_prototypes(const std::map<std::uint32_t, std::vector<EmbeddingVector>>& train_vectors,
                              const NormStats& test_stats, double eps = kDefaultEps);

/// Every train vector normalized with `test_stats`, kept individually.
PrototypeSet build_exemplars(const std::map<std::uint32_t, std::vector<EmbeddingVector>>& train_vectors,
                             const NormStats& test_stats, double eps = kDefaultEps);

/// Majority vote over the `neighbors` nearest reference rows by Euclidean
/// distance. Neighbours are ranked by (distance, label, row); vote ties go to
/// the lowest class id. With one row per class and neighbors == 1 this is
/// nearest-prototype lookup.
std::uint32_t classify(const EmbeddingVector& test_vec, const PrototypeSet& refs, std::size_t neighbors = 1);

/// Pooled raw features of every image for one representation.
struct FeatureSet {
  RepresentationSpec spec;
  std::vector<std::string> image_ids;
  std::vector<std::uint32_t> class_ids;
  Eigen::MatrixXd rows;
  std::unordered_map<std::string, Eigen::Index> row_of;

  EmbeddingVector vector(const std::string& image_id) const;
};

FeatureSet build_features(const Dataset& ds, const RepresentationSpec& spec);

struct TrialOptions {
  std::size_t neighbors = 1;
  bool prototype_mode = true;
  double eps = kDefaultEps;
};

struct Prediction {
  std::string image_id;
  std::uint32_t truth = 0;
  std::uint32_t predicted = 0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct TrialResult {
  double accuracy = 0.0;
  std::vector<Prediction> predictions;
  std::uint64_t seed = 0;
};

/// Normalization statistics are fitted on this trial's test vectors only and
/// applied to both test vectors and references.
TrialResult run_trial(const FeatureSet& features, const Episode& episode, const TrialOptions& opts = {});
TrialResult run_trial(const Dataset& ds, const RepresentationSpec& spec, const Episode& episode,
                      const TrialOptions& opts = {});

struct ExperimentConfig {
  std::string dataset;
  std::vector<RepresentationSpec> specs;
  std::vector<std::size_t> shots = {1, 2, 3, 4, 5};
  std::size_t trials = 50;
  TrialOptions options;
  std::uint64_t master_seed = 0;
  /// Worker cap; results never depend on it. 0 means hardware concurrency.
  std::size_t threads = 0;

  /// Throws ConfigError on trials == 0, shots of 0, neighbors == 0, no specs.
  void validate() const;
};

struct CellResult {
  RepresentationSpec spec;
  std::size_t shots = 0;
  std::vector<TrialResult> trials;
  double mean = 0.0;
  double std = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<CellResult> cells;
  std::optional<double> zero_shot_accuracy;
  std::size_t zero_shot_count = 0;

  const CellResult* find(const RepresentationSpec& spec, std::size_t shots) const;
};

/// Seed of one trial in the (spec, shots, trial) grid.
std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t spec_index, std::size_t shots, std::size_t trial);

/// Population mean and std of trial accuracies.
std::pair<double, double> accuracy_summary(const std::vector<TrialResult>& trials);

ExperimentReport run_experiment(const ExperimentConfig& cfg, const Dataset& ds);

struct AblationReport {
  ExperimentConfig config;
  /// token index -> one cell per shot count.
  std::map<std::size_t, std::vector<CellResult>> cells;
  /// Indices that some decoder tensor is too short for.
  std::vector<std::size_t> skipped;
};

/// Runs the decoder representation once per token index with identical trial
/// seeds, so accuracy differences come from the slice alone.
AblationReport slice_ablation(const ExperimentConfig& cfg, const Dataset& ds, const std::vector<std::size_t>& tokens);

}  // namespace fsvqa
