#include "dysat/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "dysat/parallel.hpp"
#include "dysat/tensor_io.hpp"

namespace dysat {

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "all-links") return EvalMode::AllLinks;
  if (s == "new-links") return EvalMode::NewLinks;
  if (s == "new-nodes") return EvalMode::NewNodes;
  if (s == "multi-step") return EvalMode::MultiStep;
  throw ConfigError("unknown evaluation mode: " + s);
}

std::string eval_mode_name(EvalMode mode) {
  switch (mode) {
    case EvalMode::AllLinks: return "all-links";
    case EvalMode::NewLinks: return "new-links";
    case EvalMode::NewNodes: return "new-nodes";
    case EvalMode::MultiStep: return "multi-step";
  }
  return "?";
}

std::size_t LinkExampleSet::positives() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.label;
  return n;
}

namespace {

using Pair = std::pair<NodeId, NodeId>;

Pair canonical(NodeId u, NodeId v) { return u < v ? Pair{u, v} : Pair{v, u}; }

/// Uniform negatives among unconnected eligible pairs. Small node sets are
/// enumerated exactly; large ones use bounded rejection sampling.
std::vector<Pair> sample_non_links(const Snapshot& target, const std::vector<char>& allowed,
                                   const std::vector<char>* require_one_of, std::size_t need,
                                   RngEngine& rng) {
  const std::size_t n = target.num_nodes();
  std::vector<NodeId> pool;
  for (NodeId v = 0; v < n; ++v)
    if (allowed[v]) pool.push_back(v);

  std::vector<Pair> out;
  if (need == 0) return out;

  if (pool.size() <= 2000) {
    std::vector<Pair> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      for (std::size_t j = i + 1; j < pool.size(); ++j) {
        const NodeId u = pool[i], v = pool[j];
        if (require_one_of != nullptr && !(*require_one_of)[u] && !(*require_one_of)[v]) continue;
        if (target.has_edge(u, v)) continue;
        candidates.emplace_back(u, v);
      }
    }
    if (candidates.size() < need) {
      throw ConfigError("not enough unconnected pairs for negative sampling");
    }
    // Partial Fisher-Yates: the first `need` entries are a uniform sample.
    for (std::size_t i = 0; i < need; ++i) {
      const std::size_t j = i + uniform_index(rng, candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
      out.push_back(candidates[i]);
    }
    return out;
  }

  std::vector<NodeId> first_pool;
  if (require_one_of != nullptr) {
    for (NodeId v : pool)
      if ((*require_one_of)[v]) first_pool.push_back(v);
  }
  std::set<Pair> seen;
  std::size_t tries = 0;
  const std::size_t max_tries = 200 * need + 10000;
  while (out.size() < need) {
    if (++tries > max_tries) {
      throw ConfigError("negative sampling failed to find enough unconnected pairs");
    }
    const NodeId u = require_one_of != nullptr
                         ? first_pool[uniform_index(rng, first_pool.size())]
                         : pool[uniform_index(rng, pool.size())];
    const NodeId v = pool[uniform_index(rng, pool.size())];
    if (u == v || target.has_edge(u, v)) continue;
    const Pair key = canonical(u, v);
    if (!seen.insert(key).second) continue;
    out.push_back(key);
  }
  return out;
}

}  // namespace

LinkExampleSet build_examples(const SnapshotSequence& seq, int t, EvalMode mode, RngEngine& rng,
                              int delta) {
  if (mode != EvalMode::MultiStep) delta = 1;
  if (delta < 1) throw ConfigError("delta must be >= 1");
  const int target = t + delta;
  if (t < 0 || static_cast<std::size_t>(target) >= seq.num_steps()) {
    throw RangeError("evaluation target step out of range");
  }
  const Snapshot& tgt = seq.at(target);
  const std::size_t n = seq.num_nodes;

  std::vector<char> active(n, 0);
  for (NodeId v = 0; v < n; ++v) active[v] = tgt.degree(v) > 0 ? 1 : 0;

  LinkExampleSet set;
  set.mode = mode;
  set.train_upto = t;
  set.target_step = target;

  std::vector<Pair> positives;
  std::vector<char> allowed = active;
  std::vector<char> new_nodes;
  const std::vector<char>* require_one_of = nullptr;

  switch (mode) {
    case EvalMode::AllLinks: {
      for (const auto& e : tgt.edge_list()) positives.emplace_back(e.u, e.v);
      break;
    }
    case EvalMode::NewLinks: {
      const Snapshot& prev = seq.at(t);
      for (const auto& e : tgt.edge_list()) {
        if (!prev.has_edge(e.u, e.v)) positives.emplace_back(e.u, e.v);
      }
      break;
    }
    case EvalMode::NewNodes: {
      new_nodes.assign(n, 0);
      for (NodeId v = 0; v < n; ++v) {
        if (seq.at(t).degree(v) == 0) continue;
        bool seen_before = false;
        for (int s = 0; s < t && !seen_before; ++s) {
          seen_before = seq.at(s).degree(v) > 0;
        }
        new_nodes[v] = seen_before ? 0 : 1;
      }
      for (const auto& e : tgt.edge_list()) {
        if (new_nodes[e.u] || new_nodes[e.v]) positives.emplace_back(e.u, e.v);
      }
      require_one_of = &new_nodes;
      break;
    }
    case EvalMode::MultiStep: {
      std::vector<char> seen(n, 0);
      for (int s = 0; s <= t; ++s) {
        for (NodeId v = 0; v < n; ++v) {
          if (seq.at(s).degree(v) > 0) seen[v] = 1;
        }
      }
      for (const auto& e : tgt.edge_list()) {
        if (seen[e.u] && seen[e.v]) positives.emplace_back(e.u, e.v);
      }
      for (NodeId v = 0; v < n; ++v) allowed[v] = allowed[v] && seen[v];
      break;
    }
  }

  if (positives.empty()) return set;  // empty-set marker

  const auto negatives = sample_non_links(tgt, allowed, require_one_of, positives.size(), rng);
  set.pairs.reserve(2 * positives.size());
  for (const auto& [u, v] : positives) set.pairs.push_back({u, v, 1});
  for (const auto& [u, v] : negatives) set.pairs.push_back({u, v, 0});
  return set;
}

Tensor hadamard_features(const Tensor& embeddings, const std::vector<LinkExample>& pairs) {
  if (embeddings.rank() != 2) throw DimensionError("hadamard_features: rank-2 embeddings");
  const std::size_t d = embeddings.dim(1);
  Tensor out({pairs.size(), d});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].u >= embeddings.dim(0) || pairs[i].v >= embeddings.dim(0)) {
      throw RangeError("hadamard_features: node id outside embedding rows");
    }
    const double* eu = embeddings.data() + pairs[i].u * d;
    const double* ev = embeddings.data() + pairs[i].v * d;
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = eu[j] * ev[j];
  }
  return out;
}

Tensor logistic_fit(const Tensor& features, const std::vector<int>& labels,
                    const LogisticOptions& opts) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("logistic_fit: features/labels disagree");
  }
  const std::size_t n = features.dim(0), d = features.dim(1);
  bool has_pos = false, has_neg = false;
  for (int y : labels) (y ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) {
    throw DegenerateSplitError("logistic_fit: training split has a single class");
  }

  // Fixed step from the Lipschitz bound of the regularized average loss.
  double max_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 1.0;  // bias column
    for (std::size_t j = 0; j < d; ++j) sq += features[i * d + j] * features[i * d + j];
    max_sq = std::max(max_sq, sq);
  }
  const double step = 1.0 / (0.25 * max_sq + opts.l2);

  Tensor w({d + 1});
  std::vector<double> grad(d + 1);
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = features.data() + i * d;
      double z = w[d];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
      const double err = detail::stable_sigmoid(z) - labels[i];
      for (std::size_t j = 0; j < d; ++j) grad[j] += err * x[j];
      grad[d] += err;
    }
    double norm_sq = 0.0;
    for (std::size_t j = 0; j <= d; ++j) {
      grad[j] /= static_cast<double>(n);
      if (j < d) grad[j] += opts.l2 * w[j];
      norm_sq += grad[j] * grad[j];
    }
    if (std::sqrt(norm_sq) < opts.grad_tol) break;
    for (std::size_t j = 0; j <= d; ++j) w[j] -= step * grad[j];
  }
  return w;
}

std::vector<double> logistic_predict(const Tensor& weights, const Tensor& features) {
  if (features.rank() != 2 || weights.size() != features.dim(1) + 1) {
    throw DimensionError("logistic_predict: weight/feature widths disagree");
  }
  const std::size_t n = features.dim(0), d = features.dim(1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = features.data() + i * d;
    double z = weights[d];
    for (std::size_t j = 0; j < d; ++j) z += weights[j] * x[j];
    out[i] = detail::stable_sigmoid(z);
  }
  return out;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw DimensionError("auc: scores/labels disagree");
  }
  std::size_t pos = 0;
  for (int y : labels) pos += y != 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw UndefinedMetricError("auc undefined with a single class");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Average ranks within tie groups; rank sum of positives gives the
  // Mann-Whitney statistic.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[idx[k]]) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

ExampleSplit split_examples(const std::vector<LinkExample>& pairs, RngEngine& rng,
                            double val_fraction, double train_fraction) {
  const std::size_t n = pairs.size();
  if (n < 4) throw DegenerateSplitError("too few examples to split");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  auto both_classes = [&](const std::vector<std::size_t>& part) {
    bool p = false, q = false;
    for (std::size_t i : part) (pairs[i].label ? p : q) = true;
    return p && q;
  };

  for (int attempt = 0; attempt < 50; ++attempt) {
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = uniform_index(rng, i);
      std::swap(perm[i - 1], perm[j]);
    }
    ExampleSplit split;
    const std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * n));
    const std::size_t rem = n - n_val;
    const std::size_t n_train =
        std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(train_fraction * rem)));
    if (n_train >= rem) throw DegenerateSplitError("split leaves no test examples");
    split.val.assign(perm.begin(), perm.begin() + n_val);
    split.train.assign(perm.begin() + n_val, perm.begin() + n_val + n_train);
    split.test.assign(perm.begin() + n_val + n_train, perm.end());
    if (both_classes(split.train) && both_classes(split.test) &&
        (split.val.empty() || both_classes(split.val))) {
      return split;
    }
  }
  throw DegenerateSplitError("could not split examples with both classes in every part");
}

void aggregate_report(EvalReport& report) {
  auto mean_std = [](const std::vector<double>& xs, double& mean, double& std_out) {
    if (xs.empty()) {
      mean = 0.0;
      std_out = 0.0;
      return;
    }
    mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    std_out = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  };

  for (auto& step : report.steps) {
    mean_std(step.auc_per_run, step.auc_mean, step.auc_std);
  }

  std::vector<double> micro, macro;
  for (int r = 0; r < report.runs; ++r) {
    double weighted = 0.0, weight = 0.0, plain = 0.0;
    std::size_t used = 0;
    for (const auto& step : report.steps) {
      if (step.skipped || static_cast<std::size_t>(r) >= step.auc_per_run.size()) continue;
      const double w = static_cast<double>(step.num_examples);
      weighted += w * step.auc_per_run[r];
      weight += w;
      plain += step.auc_per_run[r];
      ++used;
    }
    if (used == 0) continue;
    micro.push_back(weighted / weight);
    macro.push_back(plain / static_cast<double>(used));
  }
  mean_std(micro, report.micro_mean, report.micro_std);
  mean_std(macro, report.macro_mean, report.macro_std);
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["runs"] = runs;
  j["micro_auc"] = {{"mean", micro_mean}, {"std", micro_std}};
  j["macro_auc"] = {{"mean", macro_mean}, {"std", macro_std}};
  nlohmann::json steps_json = nlohmann::json::array();
  for (const auto& s : steps) {
    nlohmann::json sj;
    sj["train_upto"] = s.train_upto;
    sj["target_step"] = s.target_step;
    sj["num_examples"] = s.num_examples;
    sj["skipped"] = s.skipped;
    sj["auc_mean"] = s.auc_mean;
    sj["auc_std"] = s.auc_std;
    sj["auc_per_run"] = s.auc_per_run;
    steps_json.push_back(sj);
  }
  j["steps"] = steps_json;
  return j.dump(2);
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path);
  os << "step,mode,run,auc\n";
  for (const auto& s : steps) {
    for (std::size_t r = 0; r < s.auc_per_run.size(); ++r) {
      os << s.target_step << ',' << mode << ',' << r << ',' << format_value(s.auc_per_run[r])
         << '\n';
    }
  }
}

void EvalReport::write_step_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path);
  os << "step,auc_mean,auc_std,num_examples,skipped\n";
  for (const auto& s : steps) {
    os << s.target_step << ',' << format_value(s.auc_mean) << ',' << format_value(s.auc_std)
       << ',' << s.num_examples << ',' << (s.skipped ? 1 : 0) << '\n';
  }
}

namespace {

Tensor take_rows(const Tensor& m, const std::vector<std::size_t>& idx) {
  const std::size_t d = m.dim(1);
  Tensor out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = m[idx[i] * d + j];
  }
  return out;
}

std::vector<int> take_labels(const std::vector<LinkExample>& pairs,
                             const std::vector<std::size_t>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = pairs[idx[i]].label;
  return out;
}

/// Training snapshots with the held-out validation links deleted.
SnapshotSequence remove_links(const SnapshotSequence& seq, const std::set<Pair>& links) {
  if (links.empty()) return seq;
  SnapshotSequence out;
  out.num_nodes = seq.num_nodes;
  out.snapshots.reserve(seq.num_steps());
  for (const auto& snap : seq.snapshots) {
    std::vector<WeightedEdge> kept;
    for (const auto& e : snap.edge_list()) {
      if (links.count(canonical(e.u, e.v)) == 0) kept.push_back(e);
    }
    out.snapshots.emplace_back(seq.num_nodes, kept);
  }
  return out;
}

std::set<Pair> val_positive_links(const LinkExampleSet& ex, const ExampleSplit& split) {
  std::set<Pair> links;
  for (std::size_t i : split.val) {
    if (ex.pairs[i].label) links.insert(canonical(ex.pairs[i].u, ex.pairs[i].v));
  }
  return links;
}

}  // namespace

EvalReport evaluate_with(const SnapshotSequence& seq, const EvalConfig& cfg,
                         const EmbeddingProvider& provider, const PairFeatureFn& pair_features) {
  if (seq.num_steps() < 2) throw ConfigError("evaluation needs at least two snapshots");
  if (cfg.runs < 1) throw ConfigError("evaluation needs at least one run");
  PairFeatureFn features_fn = pair_features;
  if (!features_fn) {
    features_fn = [](const Tensor& emb, const LinkExampleSet& ex) {
      return hadamard_features(emb, ex.pairs);
    };
  }

  struct StepSpec {
    int t, target;
  };
  std::vector<StepSpec> specs;
  if (cfg.mode == EvalMode::MultiStep) {
    const int t0 = static_cast<int>(seq.num_steps()) - 1 - cfg.horizon;
    if (t0 < 0) throw ConfigError("multi-step horizon exceeds available snapshots");
    for (int d = 1; d <= cfg.horizon; ++d) specs.push_back({t0, t0 + d});
  } else {
    for (int t = 0; t + 1 < static_cast<int>(seq.num_steps()); ++t) {
      if (cfg.single_step >= 0 && t != cfg.single_step) continue;
      specs.push_back({t, t + 1});
    }
    if (specs.empty()) throw ConfigError("no evaluation steps match the requested range");
  }

  EvalReport report;
  report.mode = eval_mode_name(cfg.mode);
  report.runs = cfg.runs;
  report.steps.resize(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) {
    report.steps[s].train_upto = specs[s].t;
    report.steps[s].target_step = specs[s].target;
    report.steps[s].auc_per_run.assign(cfg.runs, 0.0);
  }

  auto make_scorer = [&](const LinkExampleSet& ex, const ExampleSplit& split) -> ValidationScorer {
    if (ex.empty() || split.val.empty()) return nullptr;
    const LogisticOptions opts = cfg.epoch_classifier;
    return [ex, split, features_fn, opts](const std::vector<Tensor>& emb_steps) {
      const Tensor feats = features_fn(emb_steps.back(), ex);
      const Tensor w = logistic_fit(take_rows(feats, split.train),
                                    take_labels(ex.pairs, split.train), opts);
      return auc(logistic_predict(w, take_rows(feats, split.val)),
                 take_labels(ex.pairs, split.val));
    };
  };

  auto score_split = [&](const Tensor& emb, const LinkExampleSet& ex, const ExampleSplit& split) {
    const Tensor feats = features_fn(emb, ex);
    const Tensor w = logistic_fit(take_rows(feats, split.train),
                                  take_labels(ex.pairs, split.train), cfg.classifier);
    return auc(logistic_predict(w, take_rows(feats, split.test)),
               take_labels(ex.pairs, split.test));
  };

  if (cfg.mode == EvalMode::MultiStep) {
    const int t0 = specs[0].t;
    // One representation per run, scored at every horizon.
    std::vector<std::vector<double>> result(cfg.runs,
                                            std::vector<double>(specs.size(), -1.0));
    Tensor shared_embeddings;  // downstream-only mode reuses run 0's model
    for (int r = 0; r < cfg.runs; ++r) {
      std::vector<LinkExampleSet> sets(specs.size());
      std::vector<ExampleSplit> splits(specs.size());
      int val_source = -1;
      for (std::size_t s = 0; s < specs.size(); ++s) {
        RngEngine rng(derive_seed(cfg.seed, stream_tag("examples"), static_cast<std::uint64_t>(r),
                                  static_cast<std::uint64_t>(specs[s].target)));
        sets[s] = build_examples(seq, t0, cfg.mode, rng, specs[s].target - t0);
        if (!sets[s].empty()) {
          splits[s] = split_examples(sets[s].pairs, rng, cfg.val_fraction, cfg.train_fraction);
          if (val_source < 0) val_source = static_cast<int>(s);
        }
      }
      if (val_source < 0) continue;  // nothing to score this run

      Tensor embeddings;
      if (!cfg.rerandomize_representation && r > 0) {
        embeddings = shared_embeddings;
      } else {
        SnapshotSequence train_seq = seq.prefix(t0 + 1);
        if (cfg.remove_val_links) {
          train_seq = remove_links(train_seq, val_positive_links(sets[val_source],
                                                                 splits[val_source]));
        }
        const std::uint64_t repr_seed =
            derive_seed(cfg.seed, stream_tag("repr"),
                        cfg.rerandomize_representation ? static_cast<std::uint64_t>(r) : 0,
                        static_cast<std::uint64_t>(t0));
        embeddings = provider(train_seq, repr_seed, make_scorer(sets[val_source],
                                                                splits[val_source]));
        if (!cfg.rerandomize_representation && r == 0) shared_embeddings = embeddings;
      }
      for (std::size_t s = 0; s < specs.size(); ++s) {
        if (sets[s].empty()) continue;
        result[r][s] = score_split(embeddings, sets[s], splits[s]);
      }
    }
    for (std::size_t s = 0; s < specs.size(); ++s) {
      auto& step = report.steps[s];
      step.auc_per_run.clear();
      for (int r = 0; r < cfg.runs; ++r) {
        if (result[r][s] >= 0.0) step.auc_per_run.push_back(result[r][s]);
      }
      step.skipped = step.auc_per_run.empty();
      if (!step.skipped) {
        RngEngine rng(derive_seed(cfg.seed, stream_tag("examples"), 0,
                                  static_cast<std::uint64_t>(specs[s].target)));
        step.num_examples = build_examples(seq, t0, cfg.mode, rng, specs[s].target - t0)
                                .pairs.size();
      }
    }
  } else {
    // (step, run) tasks are independent; parallelize across steps and cache
    // the representation per step in downstream-only mode.
    parallel_for(specs.size(), cfg.threads, [&](std::size_t s) {
      const StepSpec spec = specs[s];
      auto& step = report.steps[s];
      Tensor shared_embeddings;
      bool have_shared = false;
      std::vector<double> aucs;
      bool skipped = false;
      for (int r = 0; r < cfg.runs; ++r) {
        RngEngine rng(derive_seed(cfg.seed, stream_tag("examples"), static_cast<std::uint64_t>(r),
                                  static_cast<std::uint64_t>(spec.t)));
        const LinkExampleSet ex = build_examples(seq, spec.t, cfg.mode, rng);
        if (ex.empty()) {
          skipped = true;
          break;
        }
        step.num_examples = ex.pairs.size();
        const ExampleSplit split =
            split_examples(ex.pairs, rng, cfg.val_fraction, cfg.train_fraction);

        Tensor embeddings;
        if (!cfg.rerandomize_representation && have_shared) {
          embeddings = shared_embeddings;
        } else {
          SnapshotSequence train_seq = seq.prefix(spec.t + 1);
          if (cfg.remove_val_links) {
            train_seq = remove_links(train_seq, val_positive_links(ex, split));
          }
          const std::uint64_t repr_seed =
              derive_seed(cfg.seed, stream_tag("repr"),
                          cfg.rerandomize_representation ? static_cast<std::uint64_t>(r) : 0,
                          static_cast<std::uint64_t>(spec.t));
          embeddings = provider(train_seq, repr_seed, make_scorer(ex, split));
          if (!cfg.rerandomize_representation) {
            shared_embeddings = embeddings;
            have_shared = true;
          }
        }
        aucs.push_back(score_split(embeddings, ex, split));
      }
      step.skipped = skipped;
      step.auc_per_run = skipped ? std::vector<double>{} : std::move(aucs);
    });
  }

  aggregate_report(report);
  return report;
}

EmbeddingProvider make_training_provider(const FeatureMatrix& features,
                                         const ModelConfig& model_cfg,
                                         const TrainConfig& train_cfg,
                                         const SamplerConfig& sampler_cfg) {
  return [features, model_cfg, train_cfg, sampler_cfg](
             const SnapshotSequence& train_seq, std::uint64_t seed,
             const ValidationScorer& scorer) {
    TrainConfig tc = train_cfg;
    tc.seed = seed;
    const auto result = fit<double>(train_seq, features, model_cfg, tc, sampler_cfg, scorer);
    return result.embeddings.back();
  };
}

EvalReport evaluate(const SnapshotSequence& seq, const FeatureMatrix& features,
                    const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                    const SamplerConfig& sampler_cfg, const EvalConfig& eval_cfg) {
  return evaluate_with(seq, eval_cfg,
                       make_training_provider(features, model_cfg, train_cfg, sampler_cfg));
}

}  // namespace dysat
