#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dysat/graph.hpp"
#include "dysat/layers.hpp"
#include "dysat/rng.hpp"
#include "dysat/sampling.hpp"
#include "dysat/tensor.hpp"
#include "dysat/training.hpp"

namespace dysat {

enum class EvalMode { AllLinks, NewLinks, NewNodes, MultiStep };

EvalMode parse_eval_mode(const std::string& s);
std::string eval_mode_name(EvalMode mode);

struct LinkExample {
  NodeId u = 0;
  NodeId v = 0;
  int label = 0;
};

/// Labeled node pairs for one evaluation step: positives are the target
/// snapshot's links (per mode), negatives an equal number of non-links.
struct LinkExampleSet {
  std::vector<LinkExample> pairs;
  EvalMode mode = EvalMode::AllLinks;
  int train_upto = 0;   // model trained on snapshots [0, train_upto]
  int target_step = 0;  // positives drawn from this snapshot

  bool empty() const { return pairs.empty(); }
  std::size_t positives() const;
};

/// Builds examples for predicting snapshot t+delta from a model trained
/// through snapshot t. Positives per mode:
///   all-links:  every link of the target snapshot;
///   new-links:  target links absent from snapshot t;
///   new-nodes:  target links incident to nodes that first appear at t;
///   multi-step: target links between nodes already seen by step t.
/// Negatives are sampled uniformly from unconnected pairs with the same
/// endpoint eligibility; throws nothing when positives are empty (the set is
/// returned empty and the step is skipped upstream).
LinkExampleSet build_examples(const SnapshotSequence& seq, int t, EvalMode mode, RngEngine& rng,
                              int delta = 1);

/// Row per pair: elementwise product of the two node embeddings.
Tensor hadamard_features(const Tensor& embeddings, const std::vector<LinkExample>& pairs);

struct LogisticOptions {
  double l2 = 1e-4;
  int max_iters = 10000;
  double grad_tol = 1e-6;
};

/// L2-regularized logistic regression by full-batch gradient descent with a
/// Lipschitz step size, run until the gradient norm drops below grad_tol or
/// max_iters. Returns d+1 weights (bias last, unregularized).
Tensor logistic_fit(const Tensor& features, const std::vector<int>& labels,
                    const LogisticOptions& opts = {});

std::vector<double> logistic_predict(const Tensor& weights, const Tensor& features);

/// Probability that a random positive outranks a random negative; ties count
/// one half. Rank-statistic implementation, exact.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// 20% validation, then 25% of the remainder for classifier training and 75%
/// for test. Guarantees both classes in every non-empty part by resampling;
/// throws DegenerateSplitError when impossible.
struct ExampleSplit {
  std::vector<std::size_t> train, val, test;
};
ExampleSplit split_examples(const std::vector<LinkExample>& pairs, RngEngine& rng,
                            double val_fraction = 0.2, double train_fraction = 0.25);

struct StepResult {
  int train_upto = 0;
  int target_step = 0;
  std::size_t num_examples = 0;
  bool skipped = false;
  std::vector<double> auc_per_run;
  double auc_mean = 0.0;
  double auc_std = 0.0;
};

struct EvalReport {
  std::string mode;
  int runs = 0;
  std::vector<StepResult> steps;
  double micro_mean = 0.0, micro_std = 0.0;
  double macro_mean = 0.0, macro_std = 0.0;

  std::string to_json() const;
  /// Long form: step,mode,run,auc.
  void write_csv(const std::string& path) const;
  /// Plot-ready per-step summary: step,auc_mean,auc_std,num_examples.
  void write_step_csv(const std::string& path) const;
};

/// Fills per-step mean/std and micro/macro aggregates from auc_per_run and
/// example counts. Micro weights steps by example count; macro is unweighted.
void aggregate_report(EvalReport& report);

struct EvalConfig {
  EvalMode mode = EvalMode::AllLinks;
  int runs = 10;
  std::uint64_t seed = 1;
  int horizon = 6;  // multi-step forecasting depth
  /// Rerandomize representation learning per run (true) or only the example
  /// split / classifier (false).
  bool rerandomize_representation = true;
  /// Strip validation links from the training snapshots before
  /// representation learning.
  bool remove_val_links = true;
  int threads = 1;
  LogisticOptions classifier{};
  LogisticOptions epoch_classifier{1e-4, 300, 1e-6};
  double val_fraction = 0.2;
  double train_fraction = 0.25;
  /// Restrict to one training step (index into the sequence); -1 = all.
  int single_step = -1;
};

/// Embeddings [V x d] at the last step of `train_seq`; the scorer, when
/// non-null, should drive epoch selection inside the provider.
using EmbeddingProvider = std::function<Tensor(const SnapshotSequence& train_seq,
                                               std::uint64_t seed,
                                               const ValidationScorer& scorer)>;

/// Pair features for the downstream classifier; defaults to Hadamard.
using PairFeatureFn = std::function<Tensor(const Tensor& embeddings, const LinkExampleSet&)>;

/// Full dynamic link-prediction protocol: per step, train on snapshots <= t
/// (validation links held out), classify pairs at the target step, aggregate
/// AUC micro/macro over runs.
EvalReport evaluate_with(const SnapshotSequence& seq, const EvalConfig& cfg,
                         const EmbeddingProvider& provider,
                         const PairFeatureFn& pair_features = nullptr);

/// evaluate_with using a provider that trains the attention model end to end.
EvalReport evaluate(const SnapshotSequence& seq, const FeatureMatrix& features,
                    const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                    const SamplerConfig& sampler_cfg, const EvalConfig& eval_cfg);

/// Provider factory used by evaluate(); exposed for the CLI and tests.
EmbeddingProvider make_training_provider(const FeatureMatrix& features,
                                         const ModelConfig& model_cfg,
                                         const TrainConfig& train_cfg,
                                         const SamplerConfig& sampler_cfg);

}  // namespace dysat
