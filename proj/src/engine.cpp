#include "fsvqa/engine.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "fsvqa/prompt.hpp"
#include "fsvqa/rng.hpp"

namespace fsvqa {

namespace {

using TrainVectors = std::map<std::uint32_t, std::vector<EmbeddingVector>>;

Eigen::Index checked_dim(const TrainVectors& train) {
  if (train.empty()) throw ShapeError("no train classes given");
  Eigen::Index dim = -1;
  for (const auto& [cls, vs] : train) {
    if (vs.empty()) throw ShapeError("class " + std::to_string(cls) + " has no train vectors");
    for (const auto& v : vs) {
      if (dim < 0) dim = v.size();
      if (v.size() != dim) {
        throw ShapeError("train vectors of mixed dims " + std::to_string(dim) + " and " + std::to_string(v.size()));
      }
    }
  }
  return dim;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      auto i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

struct CellJob {
  const FeatureSet* features;
  std::size_t seed_spec_index;
  CellResult* cell;
};

void run_cells(const std::vector<CellJob>& jobs, const ClassIndex& classes, const ExperimentConfig& cfg) {
  for (const auto& job : jobs) job.cell->trials.assign(cfg.trials, TrialResult{});
  parallel_for(jobs.size() * cfg.trials, cfg.threads, [&](std::size_t task) {
    const auto& job = jobs[task / cfg.trials];
    const auto trial = task % cfg.trials;
    const auto seed = trial_seed(cfg.master_seed, job.seed_spec_index, job.cell->shots, trial);
    auto episode = sample_episode(classes, job.cell->shots, seed);
    job.cell->trials[trial] = run_trial(*job.features, episode, cfg.options);
  });
  for (const auto& job : jobs) {
    std::tie(job.cell->mean, job.cell->std) = accuracy_summary(job.cell->trials);
  }
}

}  // namespace

ClassIndex class_index(const Dataset& ds) {
  ClassIndex out;
  for (const auto& img : ds.images) out[img.class_id].push_back(img.image_id);
  for (auto& [cls, ids] : out) std::sort(ids.begin(), ids.end());
  return out;
}

Episode sample_episode(const ClassIndex& classes, std::size_t shots, std::uint64_t seed) {
  if (shots == 0) throw ConfigError("shots per class must be >= 1");
  Episode ep;
  ep.seed = seed;
  ep.shots = shots;
  std::mt19937_64 gen(seed);
  for (const auto& [cls, ids] : classes) {
    if (ids.size() <= shots) {
      throw DataError("class " + std::to_string(cls) + " has " + std::to_string(ids.size()) +
                      " images; " + std::to_string(shots) + "-shot episodes need at least " +
                      std::to_string(shots + 1));
    }
    // Partial Fisher-Yates: the first `shots` slots become the train draw.
    auto pool = ids;
    for (std::size_t i = 0; i < shots; ++i) {
      auto j = i + uniform_below(gen, pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    std::vector<std::string> train(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shots));
    std::vector<std::string> test(pool.begin() + static_cast<std::ptrdiff_t>(shots), pool.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    ep.train.emplace(cls, std::move(train));
    ep.test.emplace(cls, std::move(test));
  }
  return ep;
}

PrototypeSet build_prototypes(const TrainVectors& train_vectors, const NormStats& test_stats, double eps) {
  const auto dim = checked_dim(train_vectors);
  PrototypeSet out;
  out.stats = test_stats;
  out.vectors.resize(static_cast<Eigen::Index>(train_vectors.size()), dim);
  Eigen::Index row = 0;
  for (const auto& [cls, vs] : train_vectors) {
    EmbeddingVector mean = EmbeddingVector::Zero(dim);
    for (const auto& v : vs) mean += v;
    mean /= static_cast<double>(vs.size());
    out.vectors.row(row++) = zscore_apply(mean, test_stats, eps).transpose();
    out.labels.push_back(cls);
  }
  return out;
}

PrototypeSet build_exemplars(const TrainVectors& train_vectors, const NormStats& test_stats, double eps) {
  const auto dim = checked_dim(train_vectors);
  PrototypeSet out;
  out.stats = test_stats;
  Eigen::Index n = 0;
  for (const auto& [cls, vs] : train_vectors) n += static_cast<Eigen::Index>(vs.size());
  out.vectors.resize(n, dim);
  Eigen::Index row = 0;
  for (const auto& [cls, vs] : train_vectors) {
    for (const auto& v : vs) {
      out.vectors.row(row++) = zscore_apply(v, test_stats, eps).transpose();
      out.labels.push_back(cls);
    }
  }
  return out;
}

std::uint32_t classify(const EmbeddingVector& test_vec, const PrototypeSet& refs, std::size_t neighbors) {
  if (refs.size() == 0) throw ShapeError("classify: empty reference set");
  if (neighbors == 0) throw ConfigError("classify: neighbors must be >= 1");
  if (test_vec.size() != refs.vectors.cols()) {
    throw ShapeError("classify: test dim " + std::to_string(test_vec.size()) + " vs reference dim " +
                     std::to_string(refs.vectors.cols()));
  }
  // Squared distance preserves the ordering of Euclidean distance.
  Eigen::VectorXd dist = (refs.vectors.rowwise() - test_vec.transpose()).rowwise().squaredNorm();

  if (neighbors == 1) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < dist.size(); ++i) {
      const auto li = refs.labels[static_cast<std::size_t>(i)];
      const auto lb = refs.labels[static_cast<std::size_t>(best)];
      if (dist[i] < dist[best] || (dist[i] == dist[best] && li < lb)) best = i;
    }
    return refs.labels[static_cast<std::size_t>(best)];
  }

  std::vector<std::size_t> order(refs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto k = std::min(neighbors, order.size());
  auto ranked_before = [&](std::size_t a, std::size_t b) {
    const auto ea = static_cast<Eigen::Index>(a);
    const auto eb = static_cast<Eigen::Index>(b);
    if (dist[ea] != dist[eb]) return dist[ea] < dist[eb];
    if (refs.labels[a] != refs.labels[b]) return refs.labels[a] < refs.labels[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), ranked_before);

  std::map<std::uint32_t, std::size_t> votes;
  for (std::size_t i = 0; i < k; ++i) ++votes[refs.labels[order[i]]];
  // std::map iterates in ascending class id, so strict > keeps the lowest on ties.
  std::uint32_t winner = votes.begin()->first;
  std::size_t most = 0;
  for (const auto& [cls, n] : votes) {
    if (n > most) {
      most = n;
      winner = cls;
    }
  }
  return winner;
}

EmbeddingVector FeatureSet::vector(const std::string& image_id) const {
  auto it = row_of.find(image_id);
  if (it == row_of.end()) throw DataError("no features for image " + image_id);
  return rows.row(it->second).transpose();
}

FeatureSet build_features(const Dataset& ds, const RepresentationSpec& spec) {
  FeatureSet fs;
  fs.spec = spec;
  if (ds.images.empty()) return fs;
  std::vector<EmbeddingVector> vs;
  vs.reserve(ds.images.size());
  for (const auto& img : ds.images) {
    vs.push_back(build_representation(img, spec));
    if (vs.back().size() != vs.front().size()) {
      throw ShapeError("image " + img.image_id + " yields a " + std::to_string(vs.back().size()) + "-dim " +
                       spec.name() + " vector, others are " + std::to_string(vs.front().size()));
    }
  }
  fs.rows.resize(static_cast<Eigen::Index>(vs.size()), vs.front().size());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const auto& img = ds.images[i];
    fs.rows.row(static_cast<Eigen::Index>(i)) = vs[i].transpose();
    fs.image_ids.push_back(img.image_id);
    fs.class_ids.push_back(img.class_id);
    if (!fs.row_of.emplace(img.image_id, static_cast<Eigen::Index>(i)).second) {
      throw DataError("duplicate image id " + img.image_id);
    }
  }
  return fs;
}

TrialResult run_trial(const FeatureSet& features, const Episode& episode, const TrialOptions& opts) {
  std::vector<std::pair<std::string, std::uint32_t>> tests;
  for (const auto& [cls, ids] : episode.test) {
    for (const auto& id : ids) tests.emplace_back(id, cls);
  }
  TrialResult result;
  result.seed = episode.seed;
  if (tests.empty()) return result;

  Eigen::MatrixXd test_rows(static_cast<Eigen::Index>(tests.size()), features.rows.cols());
  for (std::size_t i = 0; i < tests.size(); ++i) {
    test_rows.row(static_cast<Eigen::Index>(i)) = features.vector(tests[i].first).transpose();
  }
  const auto stats = zscore_fit(test_rows);
  const Eigen::MatrixXd normalized = zscore_apply_rows(test_rows, stats, opts.eps);

  TrainVectors train;
  for (const auto& [cls, ids] : episode.train) {
    auto& bucket = train[cls];
    for (const auto& id : ids) bucket.push_back(features.vector(id));
  }
  const auto refs = opts.prototype_mode ? build_prototypes(train, stats, opts.eps)
                                        : build_exemplars(train, stats, opts.eps);

  std::size_t correct = 0;
  result.predictions.reserve(tests.size());
  for (std::size_t i = 0; i < tests.size(); ++i) {
    EmbeddingVector v = normalized.row(static_cast<Eigen::Index>(i)).transpose();
    const auto predicted = classify(v, refs, opts.prototype_mode ? 1 : opts.neighbors);
    correct += predicted == tests[i].second;
    result.predictions.push_back({tests[i].first, tests[i].second, predicted});
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(tests.size());
  return result;
}

TrialResult run_trial(const Dataset& ds, const RepresentationSpec& spec, const Episode& episode,
                      const TrialOptions& opts) {
  return run_trial(build_features(ds, spec), episode, opts);
}

void ExperimentConfig::validate() const {
  if (specs.empty()) throw ConfigError("no representations to evaluate");
  if (shots.empty()) throw ConfigError("no shot counts given");
  for (auto k : shots) {
    if (k == 0) throw ConfigError("shot counts must be >= 1");
  }
  if (trials == 0) throw ConfigError("trials must be >= 1");
  if (options.neighbors == 0) throw ConfigError("neighbors (K) must be >= 1");
  if (!(options.eps > 0.0)) throw ConfigError("eps must be positive");
}

const CellResult* ExperimentReport::find(const RepresentationSpec& spec, std::size_t shots) const {
  for (const auto& c : cells) {
    if (c.spec == spec && c.shots == shots) return &c;
  }
  return nullptr;
}

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t spec_index, std::size_t shots, std::size_t trial) {
  return derive_seed(master_seed, {spec_index, shots, trial});
}

std::pair<double, double> accuracy_summary(const std::vector<TrialResult>& trials) {
  if (trials.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (const auto& t : trials) sum += t.accuracy;
  const double mean = sum / static_cast<double>(trials.size());
  double sq = 0.0;
  for (const auto& t : trials) sq += (t.accuracy - mean) * (t.accuracy - mean);
  return {mean, std::sqrt(sq / static_cast<double>(trials.size()))};
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const Dataset& ds) {
  cfg.validate();
  ExperimentReport report;
  report.config = cfg;
  const auto classes = class_index(ds);

  std::vector<FeatureSet> features(cfg.specs.size());
  parallel_for(cfg.specs.size(), cfg.threads, [&](std::size_t i) { features[i] = build_features(ds, cfg.specs[i]); });

  for (const auto& spec : cfg.specs) {
    for (auto k : cfg.shots) report.cells.push_back(CellResult{spec, k, {}, 0.0, 0.0});
  }
  std::vector<CellJob> jobs;
  for (std::size_t s = 0; s < cfg.specs.size(); ++s) {
    for (std::size_t j = 0; j < cfg.shots.size(); ++j) {
      jobs.push_back({&features[s], s, &report.cells[s * cfg.shots.size() + j]});
    }
  }
  run_cells(jobs, classes, cfg);

  std::vector<ZeroShotAnswer> answers;
  std::vector<std::size_t> truth;
  for (const auto& img : ds.images) {
    if (!img.zero_shot_text) continue;
    answers.push_back(parse_zero_shot_answer(*img.zero_shot_text, ds.class_names.size()));
    truth.push_back(img.class_id);
  }
  if (!answers.empty()) {
    report.zero_shot_accuracy = zero_shot_accuracy(answers, truth);
    report.zero_shot_count = answers.size();
  }
  return report;
}

AblationReport slice_ablation(const ExperimentConfig& cfg, const Dataset& ds, const std::vector<std::size_t>& tokens) {
  cfg.validate();
  AblationReport report;
  report.config = cfg;

  std::size_t min_tokens = std::numeric_limits<std::size_t>::max();
  for (const auto& img : ds.images) {
    const auto& t = img.tap(TapPoint::LlmDecoder);
    if (t.rank() != 3) {
      throw ShapeError("decoder tap of image " + img.image_id + " has shape " + t.shape_string());
    }
    min_tokens = std::min(min_tokens, t.shape()[1]);
  }

  std::vector<std::size_t> usable;
  for (auto idx : tokens) {
    if (idx < min_tokens) {
      if (std::find(usable.begin(), usable.end(), idx) == usable.end()) usable.push_back(idx);
    } else {
      report.skipped.push_back(idx);
    }
  }
  if (usable.empty()) {
    throw DataError("every requested token index is beyond the shortest decoder activation (" +
                    std::to_string(min_tokens) + " tokens)");
  }

  const auto classes = class_index(ds);
  std::vector<FeatureSet> features(usable.size());
  parallel_for(usable.size(), cfg.threads, [&](std::size_t i) {
    features[i] = build_features(ds, RepresentationSpec{RepresentationKind::LlmDecoder, usable[i]});
  });

  for (auto idx : usable) {
    auto& row = report.cells[idx];
    for (auto k : cfg.shots) {
      row.push_back(CellResult{RepresentationSpec{RepresentationKind::LlmDecoder, idx}, k, {}, 0.0, 0.0});
    }
  }
  std::vector<CellJob> jobs;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    for (auto& cell : report.cells[usable[i]]) jobs.push_back({&features[i], 0, &cell});
  }
  run_cells(jobs, classes, cfg);
  return report;
}

}  // namespace fsvqa
