#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dysat/layers.hpp"
#include "dysat/sampling.hpp"
#include "dysat/tensor_io.hpp"

namespace dysat {

/// -log arguments are clamped below at 1e-12.
inline constexpr double kLossLogFloor = 1e-12;

struct TrainConfig {
  double learning_rate = 1e-3;
  double w_n = 1.0;  // negative sampling ratio in the objective
  double l2 = 5e-4;
  int batch_nodes = 256;
  int max_epochs = 200;
  std::uint64_t seed = 1;
  /// Positive pairs drawn per (node, step) each epoch; 0 keeps the full
  /// multiset. Bounds the per-epoch cost on walk-dense graphs.
  int pairs_per_node_cap = 100;
  bool resample_walks_per_epoch = false;
  /// "val-auc" keeps the epoch with the best validation score (falls back to
  /// loss when no scorer is given); "loss" keeps the lowest-loss epoch.
  std::string selection = "val-auc";
  int threads = 1;

  void validate() const {
    if (learning_rate <= 0 || w_n < 0 || l2 < 0 || batch_nodes <= 0 || max_epochs <= 0) {
      throw ConfigError("train: rates, batch size and epochs must be positive");
    }
    if (pairs_per_node_cap < 0) throw ConfigError("train: pairs_per_node_cap must be >= 0");
    if (selection != "val-auc" && selection != "loss") {
      throw ConfigError("train: selection must be `val-auc` or `loss`");
    }
  }
};

// ---- Adam ---------------------------------------------------------------------

template <class Real>
struct AdamStateT {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<TensorT<Real>> m;
  std::vector<TensorT<Real>> v;

  template <class Refs>
  static AdamStateT init(const Refs& params) {
    AdamStateT s;
    for (const auto& p : params) {
      s.m.emplace_back(p.tensor->shape());
      s.v.emplace_back(p.tensor->shape());
    }
    return s;
  }
};

/// Bias-corrected Adam update; the L2 term l2 * theta is added to the
/// gradient of every decaying parameter before the moment updates.
template <class Real>
void adam_step(std::vector<ParamRef<Real>>& params, const std::vector<TensorT<Real>>& grads,
               AdamStateT<Real>& state, double lr, double l2) {
  if (grads.size() != params.size()) throw DimensionError("adam_step: gradient count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    TensorT<Real>& theta = *params[p].tensor;
    const TensorT<Real>& g = grads[p];
    if (!g.all_finite()) {
      throw InstabilityError("non-finite gradient in parameter " + params[p].name);
    }
    TensorT<Real>& m = state.m[p];
    TensorT<Real>& v = state.v[p];
    const double decay = params[p].decay ? l2 : 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = static_cast<double>(g[i]) + decay * static_cast<double>(theta[i]);
      const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      theta[i] -= static_cast<Real>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + state.eps));
    }
  }
}

// ---- graph-context loss ---------------------------------------------------------

/// Flat index arrays into the stacked [T*V x d] embedding tensor; row t*V + v
/// holds node v at step t. Negatives carry one entry per (positive, draw).
struct LossBatch {
  std::vector<std::uint32_t> pos_u, pos_v;
  std::vector<std::uint32_t> neg_u, neg_v;

  bool empty() const { return pos_u.empty(); }
};

/// L = sum over positives of -log sigmoid(<e_u, e_v>)
///     + w_n * sum over negatives of -log(1 - sigmoid(<e_u', e_v>)).
template <class Real>
Var context_loss_var(TapeT<Real>& tape, Var emb, const LossBatch& batch, Real w_n) {
  const Real cap = static_cast<Real>(-std::log(kLossLogFloor));
  Var pos_s = tape.row_dot(tape.gather_rows(emb, batch.pos_u), tape.gather_rows(emb, batch.pos_v));
  Var loss = tape.sum(tape.softplus_clamped(tape.scale(pos_s, Real(-1)), cap));
  if (!batch.neg_u.empty() && w_n != Real(0)) {
    Var neg_s =
        tape.row_dot(tape.gather_rows(emb, batch.neg_u), tape.gather_rows(emb, batch.neg_v));
    loss = tape.add(loss, tape.scale(tape.sum(tape.softplus_clamped(neg_s, cap)), w_n));
  }
  return loss;
}

struct LossBatchOptions {
  int negatives_per_positive = 10;
  int pairs_per_node_cap = 0;  // 0 = full multiset
};

/// Positive pairs (and their sampled negatives) for the given source nodes.
/// When a node's context multiset exceeds the cap, the cap is drawn with
/// replacement so pair frequencies keep acting as weights in expectation.
inline LossBatch make_loss_batch(const WalkCorpus& corpus, const std::vector<NodeId>& sources,
                                 const LossBatchOptions& opts, RngEngine& pair_rng,
                                 RngEngine& neg_rng) {
  LossBatch batch;
  const std::size_t nodes = corpus.num_nodes;
  for (std::size_t t = 0; t < corpus.num_steps(); ++t) {
    if (!corpus.step_usable(t)) continue;
    const std::uint32_t base = static_cast<std::uint32_t>(t * nodes);
    std::size_t step_positives = 0;
    for (NodeId v : sources) {
      const auto& ctx = corpus.contexts[t][v];
      if (ctx.empty()) continue;
      const std::size_t cap = static_cast<std::size_t>(opts.pairs_per_node_cap);
      const std::size_t take = (cap == 0 || ctx.size() <= cap) ? ctx.size() : cap;
      for (std::size_t i = 0; i < take; ++i) {
        const NodeId u =
            take == ctx.size() ? ctx[i] : ctx[uniform_index(pair_rng, ctx.size())];
        batch.pos_u.push_back(base + u);
        batch.pos_v.push_back(base + v);
        ++step_positives;
      }
    }
    if (step_positives == 0 || opts.negatives_per_positive <= 0) continue;
    const auto negs = sample_negatives(
        corpus.neg_dist[t], static_cast<int>(step_positives) * opts.negatives_per_positive,
        neg_rng);
    const std::size_t first_pos = batch.pos_v.size() - step_positives;
    for (std::size_t i = 0; i < step_positives; ++i) {
      for (int k = 0; k < opts.negatives_per_positive; ++k) {
        batch.neg_u.push_back(base + negs[i * opts.negatives_per_positive + k]);
        batch.neg_v.push_back(batch.pos_v[first_pos + i]);
      }
    }
  }
  return batch;
}

namespace detail {

template <class Real>
TensorT<Real> stack_steps(const std::vector<TensorT<Real>>& per_step) {
  if (per_step.empty()) throw DimensionError("stack_steps: no embeddings");
  const std::size_t nodes = per_step[0].dim(0), d = per_step[0].dim(1);
  TensorT<Real> out({per_step.size() * nodes, d});
  std::size_t at = 0;
  for (const auto& m : per_step) {
    if (m.dim(0) != nodes || m.dim(1) != d) throw DimensionError("stack_steps: ragged steps");
    for (std::size_t i = 0; i < m.size(); ++i) out[at + i] = m[i];
    at += m.size();
  }
  return out;
}

template <class Real>
std::vector<NodeId> all_nodes(const WalkCorpus& corpus) {
  std::vector<NodeId> nodes(corpus.num_nodes);
  for (std::size_t v = 0; v < corpus.num_nodes; ++v) nodes[v] = static_cast<NodeId>(v);
  return nodes;
}

}  // namespace detail

/// Eq.-5 objective over a full corpus with negatives drawn inside from the
/// corpus distributions (k per positive pair).
template <class Real>
double context_loss(const std::vector<TensorT<Real>>& embeddings, const WalkCorpus& corpus,
                    double w_n, int negatives_per_positive, RngEngine& rng) {
  LossBatchOptions opts;
  opts.negatives_per_positive = negatives_per_positive;
  RngEngine pair_rng(0);  // cap disabled: unused
  const LossBatch batch =
      make_loss_batch(corpus, detail::all_nodes<Real>(corpus), opts, pair_rng, rng);
  TapeT<Real> tape;
  Var emb = tape.constant(detail::stack_steps(embeddings));
  if (batch.empty()) return 0.0;
  return static_cast<double>(tape.value(context_loss_var(tape, emb, batch, static_cast<Real>(w_n)))[0]);
}

/// Same objective with caller-pinned negatives: negatives[t][p] lists the
/// draws for positive p of step t. Oracle tests use this form.
template <class Real>
double context_loss_pinned(
    const std::vector<TensorT<Real>>& embeddings,
    const std::vector<std::vector<std::pair<NodeId, NodeId>>>& positives,
    const std::vector<std::vector<std::vector<NodeId>>>& negatives, double w_n) {
  const std::size_t nodes = embeddings.empty() ? 0 : embeddings[0].dim(0);
  LossBatch batch;
  for (std::size_t t = 0; t < positives.size(); ++t) {
    const std::uint32_t base = static_cast<std::uint32_t>(t * nodes);
    for (std::size_t p = 0; p < positives[t].size(); ++p) {
      const auto& [v, u] = positives[t][p];
      batch.pos_u.push_back(base + u);
      batch.pos_v.push_back(base + v);
      if (t < negatives.size() && p < negatives[t].size()) {
        for (NodeId n : negatives[t][p]) {
          batch.neg_u.push_back(base + n);
          batch.neg_v.push_back(base + v);
        }
      }
    }
  }
  if (batch.empty()) return 0.0;
  TapeT<Real> tape;
  Var emb = tape.constant(detail::stack_steps(embeddings));
  return static_cast<double>(tape.value(context_loss_var(tape, emb, batch, static_cast<Real>(w_n)))[0]);
}

// ---- representation store (IncSAT) ----------------------------------------------

/// Directory of per-step structural representations; load(t) after save(t) is
/// bit-identical (binary f64 round trip).
class RepresentationStore {
 public:
  explicit RepresentationStore(std::string dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::string path(std::size_t t) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "h_%04zu.tensor", t);
    return dir_ + "/" + buf;
  }

  bool has(std::size_t t) const { return std::filesystem::exists(path(t)); }

  void save(std::size_t t, const Tensor& h) const { save_tensor(path(t), h); }

  Tensor load(std::size_t t) const {
    if (!has(t)) throw RangeError("representation store missing step " + std::to_string(t));
    return load_tensor<double>(path(t));
  }

  /// Steps 0..count-1; throws listing every absent step.
  std::vector<Tensor> load_range(std::size_t count) const {
    std::string missing;
    for (std::size_t t = 0; t < count; ++t) {
      if (!has(t)) missing += (missing.empty() ? "" : ", ") + std::to_string(t);
    }
    if (!missing.empty()) {
      throw RangeError("representation store missing steps: " + missing);
    }
    std::vector<Tensor> out;
    out.reserve(count);
    for (std::size_t t = 0; t < count; ++t) out.push_back(load(t));
    return out;
  }

 private:
  std::string dir_;
};

// ---- training loop ----------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double val_auc = std::numeric_limits<double>::quiet_NaN();
};

/// Scores per-step embeddings (double precision) against held-out validation
/// links; wired in by the evaluation layer.
using ValidationScorer = std::function<double(const std::vector<Tensor>&)>;

template <class Real>
struct FitResultT {
  ModelParamsT<Real> params;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_score = 0.0;
  std::vector<Tensor> embeddings;  // per-step [V x d] of the selected model, eval mode
};

using FitResult = FitResultT<double>;

namespace detail {

template <class Real>
struct ForwardFn {
  std::function<ModelOutputT<Real>(TapeT<Real>&, const ParamVarsT<Real>&, const ForwardOptions&)>
      run;
};

/// Shared minibatch loop behind fit and incremental_fit. `loss_sources`
/// filters which (step, node) pairs may contribute positives; epochs draw
/// fresh negatives and fresh dropout masks from seeded streams.
template <class Real>
FitResultT<Real> train_loop(ModelParamsT<Real> params, const ForwardFn<Real>& forward,
                            const WalkCorpus& corpus, const TrainConfig& cfg,
                            const SamplerConfig& sampler, const ValidationScorer& scorer,
                            const std::function<WalkCorpus(int epoch)>& resample) {
  cfg.validate();
  std::size_t total_pairs = 0;
  for (std::size_t t = 0; t < corpus.num_steps(); ++t) total_pairs += corpus.total_pairs(t);
  if (total_pairs == 0) throw ConfigError("empty training corpus: no co-occurrence pairs");

  auto refs = collect_params(params);
  auto adam = AdamStateT<Real>::init(refs);
  const bool has_position = params.position.size() > 0;

  LossBatchOptions loss_opts;
  loss_opts.negatives_per_positive = sampler.negatives_per_positive;
  loss_opts.pairs_per_node_cap = cfg.pairs_per_node_cap;

  const std::size_t nodes = corpus.num_nodes;
  std::vector<NodeId> order(nodes);
  for (std::size_t v = 0; v < nodes; ++v) order[v] = static_cast<NodeId>(v);

  FitResultT<Real> result;
  const bool select_by_val = cfg.selection == "val-auc" && scorer != nullptr;
  double best = -std::numeric_limits<double>::infinity();
  WalkCorpus fresh;
  const WalkCorpus* active_corpus = &corpus;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.resample_walks_per_epoch && resample && epoch > 1) {
      fresh = resample(epoch);
      active_corpus = &fresh;
    }
    RngEngine batch_rng(derive_seed(cfg.seed, stream_tag("batch"), epoch));
    RngEngine pair_rng(derive_seed(cfg.seed, stream_tag("pairs"), epoch));
    RngEngine neg_rng(derive_seed(cfg.seed, stream_tag("negatives"), epoch));
    RngEngine drop_rng(derive_seed(cfg.seed, stream_tag("dropout"), epoch));

    // Fisher-Yates shuffle of node order.
    for (std::size_t i = nodes; i > 1; --i) {
      const std::size_t j = uniform_index(batch_rng, i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    const std::size_t bsz = static_cast<std::size_t>(cfg.batch_nodes);
    for (std::size_t start = 0; start < nodes; start += bsz) {
      const std::size_t end = std::min(nodes, start + bsz);
      std::vector<NodeId> batch_nodes(order.begin() + start, order.begin() + end);
      const LossBatch batch =
          make_loss_batch(*active_corpus, batch_nodes, loss_opts, pair_rng, neg_rng);
      if (batch.empty()) continue;

      TapeT<Real> tape;
      auto pv = bind_params(tape, params, true);
      ForwardOptions opts;
      opts.training = true;
      opts.rng = &drop_rng;
      auto out = forward.run(tape, pv, opts);
      Var loss = context_loss_var(tape, out.embeddings, batch, static_cast<Real>(cfg.w_n));
      const double loss_value = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(loss_value)) {
        throw InstabilityError("training diverged: non-finite loss at epoch " +
                               std::to_string(epoch));
      }
      epoch_loss += loss_value;
      tape.backward(loss);
      const auto grads = read_param_grads(tape, pv, has_position);
      adam_step(refs, grads, adam, cfg.learning_rate, cfg.l2);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = epoch_loss;

    std::vector<Tensor> eval_embeddings;
    if (scorer != nullptr) {
      TapeT<Real> tape;
      auto pv = bind_params(tape, params, false);
      auto out = forward.run(tape, pv, ForwardOptions{});
      eval_embeddings =
          split_steps(tape.value(out.embeddings).template cast<double>(), out.steps, out.nodes);
      rec.val_auc = scorer(eval_embeddings);
    }

    const double score = select_by_val ? rec.val_auc : -rec.loss;
    if (score > best) {
      best = score;
      result.params = params;
      result.best_epoch = epoch;
      result.best_score = select_by_val ? rec.val_auc : rec.loss;
      result.embeddings = std::move(eval_embeddings);
    }
    result.history.push_back(rec);
  }

  if (result.best_epoch < 0) {
    result.params = params;
  }
  // Final embeddings of the selected model when no scorer cached them.
  if (result.embeddings.empty()) {
    TapeT<Real> tape;
    auto pv = bind_params(tape, result.params, false);
    auto out = forward.run(tape, pv, ForwardOptions{});
    result.embeddings =
        split_steps(tape.value(out.embeddings).template cast<double>(), out.steps, out.nodes);
  }
  return result;
}

}  // namespace detail

/// Trains on the full given sequence (callers pass the training prefix).
/// Deterministic for fixed (data, config, seed); model selection keeps the
/// best validation-AUC epoch when a scorer is supplied.
template <class Real = double>
FitResultT<Real> fit(const SnapshotSequence& seq, const FeatureMatrix& features,
                     const ModelConfig& model_cfg, const TrainConfig& cfg,
                     const SamplerConfig& sampler, const ValidationScorer& scorer = nullptr) {
  cfg.validate();
  model_cfg.validate(features.cols);
  const auto structs = build_edge_structures(seq);
  SamplerConfig walk_cfg = sampler;
  walk_cfg.seed = derive_seed(cfg.seed, stream_tag("corpus"));
  const WalkCorpus corpus = build_corpus(seq, walk_cfg, cfg.threads);

  const TensorT<Real> x = features.as_tensor().cast<Real>();
  detail::ForwardFn<Real> forward;
  forward.run = [&structs, &x, one_hot = features.one_hot, &model_cfg](
                    TapeT<Real>& tape, const ParamVarsT<Real>& pv, const ForwardOptions& opts) {
    return model_forward<Real>(tape, structs, x, one_hot, pv, model_cfg, opts);
  };

  auto params = init_params<Real>(model_cfg, features.cols, seq.num_steps(), cfg.seed);
  auto resample = [&](int epoch) {
    SamplerConfig c = sampler;
    c.seed = derive_seed(cfg.seed, stream_tag("corpus"), epoch);
    return build_corpus(seq, c, cfg.threads);
  };
  return detail::train_loop<Real>(std::move(params), forward, corpus, cfg, sampler, scorer,
                                  resample);
}

template <class Real>
struct IncrementalFitResultT {
  FitResultT<Real> fit;
  Tensor latest_embeddings;      // [V x d] at the newest step
  Tensor latest_structural;      // [V x f] appended to the store
};

/// IncSAT step: the structural block runs only on the newest snapshot; history
/// comes from the store as constants, and training walks come from the newest
/// snapshot alone. Appends the selected model's structural output to the store.
template <class Real = double>
IncrementalFitResultT<Real> incremental_fit(const Snapshot& latest, std::size_t step_index,
                                            RepresentationStore& store,
                                            const FeatureMatrix& features,
                                            const ModelConfig& model_cfg, const TrainConfig& cfg,
                                            const SamplerConfig& sampler,
                                            const ValidationScorer& scorer = nullptr,
                                            ForwardAudit* audit = nullptr) {
  cfg.validate();
  model_cfg.validate(features.cols);
  const std::vector<Tensor> stored = store.load_range(step_index);
  std::vector<TensorT<Real>> history;
  history.reserve(stored.size());
  for (const auto& h : stored) history.push_back(h.cast<Real>());

  const EdgeStructure latest_struct = build_edge_structure(latest);

  // Walks from the newest snapshot only, seeded by its global index so the
  // stream matches what fit would use for the same snapshot.
  SnapshotSequence latest_seq;
  latest_seq.num_nodes = latest.num_nodes();
  latest_seq.snapshots.push_back(latest);
  SamplerConfig walk_cfg = sampler;
  walk_cfg.seed = derive_seed(cfg.seed, stream_tag("corpus"));
  WalkCorpus local = build_corpus_at(latest_seq, walk_cfg, step_index, cfg.threads);

  // Contexts sit at local step 0 of a 1-step corpus; embeddings span
  // step_index + 1 steps. Re-base contexts to the global last step.
  WalkCorpus corpus;
  corpus.num_nodes = local.num_nodes;
  corpus.contexts.assign(step_index + 1, std::vector<std::vector<NodeId>>(local.num_nodes));
  corpus.neg_dist.assign(step_index + 1, {});
  corpus.contexts[step_index] = std::move(local.contexts[0]);
  corpus.neg_dist[step_index] = std::move(local.neg_dist[0]);

  const TensorT<Real> x = features.as_tensor().cast<Real>();
  detail::ForwardFn<Real> forward;
  forward.run = [&history, &latest_struct, &x, one_hot = features.one_hot, &model_cfg, audit](
                    TapeT<Real>& tape, const ParamVarsT<Real>& pv, const ForwardOptions& opts) {
    ForwardOptions with_audit = opts;
    with_audit.audit = audit;
    return incremental_forward<Real>(tape, history, latest_struct, x, one_hot, pv, model_cfg,
                                     with_audit);
  };

  auto params = init_params<Real>(model_cfg, features.cols, step_index + 1, cfg.seed);
  auto result = detail::train_loop<Real>(std::move(params), forward, corpus, cfg, sampler,
                                         scorer, nullptr);

  IncrementalFitResultT<Real> out;
  out.latest_embeddings = result.embeddings.back();
  {
    TapeT<Real> tape;
    auto pv = bind_params(tape, result.params, false);
    auto model_out = forward.run(tape, pv, ForwardOptions{});
    const auto h_all =
        split_steps(tape.value(model_out.structural_out).template cast<double>(),
                    model_out.steps, model_out.nodes);
    out.latest_structural = h_all.back();
  }
  store.save(step_index, out.latest_structural);
  out.fit = std::move(result);
  return out;
}

}  // namespace dysat
