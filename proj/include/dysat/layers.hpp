#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dysat/graph.hpp"
#include "dysat/rng.hpp"
#include "dysat/tape.hpp"

namespace dysat {

/// One multi-head attention layer: `heads` independent heads of `dim`
/// features each, concatenated to heads*dim outputs.
struct LayerSpec {
  std::size_t heads = 1;
  std::size_t dim = 8;
};

struct ModelConfig {
  std::vector<LayerSpec> structural_layers{{16, 8}};
  std::vector<LayerSpec> temporal_layers{{16, 8}};
  std::size_t final_dim = 128;
  /// Steps of history each position attends over (0 = all history).
  std::size_t window = 0;
  double structural_dropout = 0.1;
  double temporal_dropout = 0.5;
  double leaky_relu_slope = 0.2;
  bool ablate_structural = false;
  bool ablate_temporal = false;

  void validate(std::size_t input_dim) const;

  std::size_t structural_out_dim() const;
  /// Dimension entering the temporal block (= position embedding dim).
  std::size_t temporal_in_dim(std::size_t input_dim) const;
  std::size_t temporal_out_dim(std::size_t input_dim) const;
  /// Input width of the final affine map.
  std::size_t ff_in_dim(std::size_t input_dim) const;

  std::string serialize() const;
  static ModelConfig deserialize_fields(const std::vector<std::pair<std::string, std::string>>&);
};

/// Adjacency entries for attention: every link twice (both directions) plus a
/// unit-weight self entry per node, grouped by destination.
EdgeStructure build_edge_structure(const Snapshot& s);
std::vector<EdgeStructure> build_edge_structures(const SnapshotSequence& seq);

/// T x T mask with entry (i, j) = 0 iff position i may attend to position j:
/// j <= i, and within the last `window` steps when window > 0. All other
/// entries are -inf.
template <class Real = double>
TensorT<Real> build_causal_mask(std::size_t steps, std::size_t window = 0) {
  if (steps < 1) throw ConfigError("causal mask needs at least one step");
  TensorT<Real> m({steps, steps});
  const Real ninf = -std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < steps; ++j) {
      const bool in_window = window == 0 || j + window > i;
      m.at(i, j) = (j <= i && in_window) ? Real(0) : ninf;
    }
  }
  return m;
}

template <class Real>
struct StructuralHeadParamsT {
  TensorT<Real> weight;  // D x F shared transform
  TensorT<Real> attn;    // 2F attention vector over [Wx_u || Wx_v]
};

template <class Real>
struct TemporalHeadParamsT {
  TensorT<Real> wq, wk, wv;  // D' x F' projections
};

template <class Real>
struct ModelParamsT {
  std::vector<std::vector<StructuralHeadParamsT<Real>>> structural;  // [layer][head]
  std::vector<std::vector<TemporalHeadParamsT<Real>>> temporal;      // [layer][head]
  TensorT<Real> position;                                            // T x f
  TensorT<Real> ff_weight;                                           // ff_in x d
  TensorT<Real> ff_bias;                                             // d
};

using ModelParams = ModelParamsT<double>;

template <class Real>
struct ParamRef {
  std::string name;
  TensorT<Real>* tensor;
  bool decay;  // participates in L2 regularization
};

/// Records which snapshot indices the structural block ran on.
struct ForwardAudit {
  std::vector<int> structural_snapshots;
};

/// Exact attention weights captured during a forward pass.
struct AttentionExport {
  struct Structural {
    int layer, head, snapshot;
    NodeId u, v;  // contribution of u to v
    double alpha;
  };
  struct Temporal {
    int layer, head;
    NodeId node;
    int i, j;
    double beta;
  };
  std::vector<Structural> structural;
  std::vector<Temporal> temporal;
};

struct ForwardOptions {
  bool training = false;
  RngEngine* rng = nullptr;  // dropout stream; required when training with dropout
  AttentionExport* export_sink = nullptr;
  ForwardAudit* audit = nullptr;
  FlopCounter* flops = nullptr;
};

/// Node features on the tape; `identity` marks 1-hot input so the first
/// structural transform can use its weight rows directly.
template <class Real>
struct FeatureInputT {
  Var var{};
  bool identity = false;
};

namespace detail {

template <class Real>
TensorT<Real> glorot(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
                     RngEngine& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  TensorT<Real> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<Real>(uniform_range(rng, -limit, limit));
  }
  return t;
}

}  // namespace detail

/// Glorot-uniform initialization of every learnable tensor, in a fixed order
/// so identical seeds give identical models.
template <class Real>
ModelParamsT<Real> init_params(const ModelConfig& cfg, std::size_t input_dim, std::size_t steps,
                               std::uint64_t seed) {
  cfg.validate(input_dim);
  RngEngine rng(derive_seed(seed, stream_tag("init")));
  ModelParamsT<Real> p;
  std::size_t in_dim = input_dim;
  if (!cfg.ablate_structural) {
    for (const LayerSpec& layer : cfg.structural_layers) {
      std::vector<StructuralHeadParamsT<Real>> heads;
      for (std::size_t h = 0; h < layer.heads; ++h) {
        StructuralHeadParamsT<Real> head;
        head.weight = detail::glorot<Real>({in_dim, layer.dim}, in_dim, layer.dim, rng);
        head.attn = detail::glorot<Real>({2 * layer.dim}, 2 * layer.dim, 1, rng);
        heads.push_back(std::move(head));
      }
      p.structural.push_back(std::move(heads));
      in_dim = layer.heads * layer.dim;
    }
  }
  const std::size_t f = cfg.temporal_in_dim(input_dim);
  if (!cfg.ablate_temporal) {
    std::size_t t_in = f;
    for (const LayerSpec& layer : cfg.temporal_layers) {
      std::vector<TemporalHeadParamsT<Real>> heads;
      for (std::size_t h = 0; h < layer.heads; ++h) {
        TemporalHeadParamsT<Real> head;
        head.wq = detail::glorot<Real>({t_in, layer.dim}, t_in, layer.dim, rng);
        head.wk = detail::glorot<Real>({t_in, layer.dim}, t_in, layer.dim, rng);
        head.wv = detail::glorot<Real>({t_in, layer.dim}, t_in, layer.dim, rng);
        heads.push_back(std::move(head));
      }
      p.temporal.push_back(std::move(heads));
      t_in = layer.heads * layer.dim;
    }
    p.position = detail::glorot<Real>({steps, f}, steps, f, rng);
  }
  const std::size_t ff_in = cfg.ff_in_dim(input_dim);
  p.ff_weight = detail::glorot<Real>({ff_in, cfg.final_dim}, ff_in, cfg.final_dim, rng);
  p.ff_bias = TensorT<Real>({cfg.final_dim});
  return p;
}

template <class To, class From>
ModelParamsT<To> cast_params(const ModelParamsT<From>& p) {
  ModelParamsT<To> out;
  for (const auto& layer : p.structural) {
    std::vector<StructuralHeadParamsT<To>> heads;
    for (const auto& h : layer) {
      heads.push_back({h.weight.template cast<To>(), h.attn.template cast<To>()});
    }
    out.structural.push_back(std::move(heads));
  }
  for (const auto& layer : p.temporal) {
    std::vector<TemporalHeadParamsT<To>> heads;
    for (const auto& h : layer) {
      heads.push_back({h.wq.template cast<To>(), h.wk.template cast<To>(),
                       h.wv.template cast<To>()});
    }
    out.temporal.push_back(std::move(heads));
  }
  out.position = p.position.template cast<To>();
  out.ff_weight = p.ff_weight.template cast<To>();
  out.ff_bias = p.ff_bias.template cast<To>();
  return out;
}

template <class Real>
std::vector<ParamRef<Real>> collect_params(ModelParamsT<Real>& p) {
  std::vector<ParamRef<Real>> out;
  for (std::size_t l = 0; l < p.structural.size(); ++l) {
    for (std::size_t h = 0; h < p.structural[l].size(); ++h) {
      const std::string base = "structural." + std::to_string(l) + "." + std::to_string(h);
      out.push_back({base + ".weight", &p.structural[l][h].weight, true});
      out.push_back({base + ".attn", &p.structural[l][h].attn, true});
    }
  }
  for (std::size_t l = 0; l < p.temporal.size(); ++l) {
    for (std::size_t h = 0; h < p.temporal[l].size(); ++h) {
      const std::string base = "temporal." + std::to_string(l) + "." + std::to_string(h);
      out.push_back({base + ".wq", &p.temporal[l][h].wq, true});
      out.push_back({base + ".wk", &p.temporal[l][h].wk, true});
      out.push_back({base + ".wv", &p.temporal[l][h].wv, true});
    }
  }
  if (p.position.size() > 0) out.push_back({"position", &p.position, false});
  out.push_back({"ff.weight", &p.ff_weight, true});
  out.push_back({"ff.bias", &p.ff_bias, false});
  return out;
}

/// Parameters bound to a tape for one forward pass.
template <class Real>
struct ParamVarsT {
  std::vector<std::vector<std::pair<Var, Var>>> structural;   // (weight, attn)
  std::vector<std::vector<std::array<Var, 3>>> temporal;      // (wq, wk, wv)
  Var position{}, ff_weight{}, ff_bias{};
};

template <class Real>
ParamVarsT<Real> bind_params(TapeT<Real>& tape, const ModelParamsT<Real>& p, bool requires_grad) {
  ParamVarsT<Real> pv;
  for (const auto& layer : p.structural) {
    std::vector<std::pair<Var, Var>> heads;
    for (const auto& head : layer) {
      heads.emplace_back(tape.leaf(head.weight, requires_grad),
                         tape.leaf(head.attn, requires_grad));
    }
    pv.structural.push_back(std::move(heads));
  }
  for (const auto& layer : p.temporal) {
    std::vector<std::array<Var, 3>> heads;
    for (const auto& head : layer) {
      heads.push_back({tape.leaf(head.wq, requires_grad), tape.leaf(head.wk, requires_grad),
                       tape.leaf(head.wv, requires_grad)});
    }
    pv.temporal.push_back(std::move(heads));
  }
  if (p.position.size() > 0) pv.position = tape.leaf(p.position, requires_grad);
  pv.ff_weight = tape.leaf(p.ff_weight, requires_grad);
  pv.ff_bias = tape.leaf(p.ff_bias, requires_grad);
  return pv;
}

/// Gradients read back from a tape in collect_params order.
template <class Real>
std::vector<TensorT<Real>> read_param_grads(const TapeT<Real>& tape, const ParamVarsT<Real>& pv,
                                            bool has_position) {
  std::vector<TensorT<Real>> grads;
  for (const auto& layer : pv.structural) {
    for (const auto& [w, a] : layer) {
      grads.push_back(tape.grad(w));
      grads.push_back(tape.grad(a));
    }
  }
  for (const auto& layer : pv.temporal) {
    for (const auto& head : layer) {
      grads.push_back(tape.grad(head[0]));
      grads.push_back(tape.grad(head[1]));
      grads.push_back(tape.grad(head[2]));
    }
  }
  if (has_position) grads.push_back(tape.grad(pv.position));
  grads.push_back(tape.grad(pv.ff_weight));
  grads.push_back(tape.grad(pv.ff_bias));
  return grads;
}

template <class Real>
struct StructuralHeadOut {
  Var output;  // [V x F]
  Var alpha;   // attention weights over edge-structure entries, pre-dropout
};

/// One structural attention head over one snapshot: logits
/// leaky_relu(A_uv * a^T [Wx_u || Wx_v]) softmaxed over N_v (self included),
/// output elu(sum alpha_uv Wx_u). `es` must outlive the tape.
template <class Real>
StructuralHeadOut<Real> structural_attention_forward(TapeT<Real>& tape, const EdgeStructure& es,
                                                     FeatureInputT<Real> x, Var weight, Var attn,
                                                     Real slope, Real dropout_p = Real(0),
                                                     RngEngine* rng = nullptr) {
  const std::size_t feat = tape.value(weight).dim(1);
  if (tape.value(attn).size() != 2 * feat) {
    throw DimensionError("structural attention vector must have 2F entries");
  }
  Var wx;
  if (x.identity) {
    if (tape.value(weight).dim(0) != es.num_nodes()) {
      throw DimensionError("identity features require one weight row per node");
    }
    wx = weight;
  } else {
    wx = tape.matmul(x.var, weight);
  }
  Var a_nbr = tape.slice1d(attn, 0, feat);
  Var a_self = tape.slice1d(attn, feat, feat);
  Var s_src = tape.matvec(wx, a_nbr);
  Var s_dst = tape.matvec(wx, a_self);
  Var act = tape.leaky_relu(tape.edge_score(s_src, s_dst, es), slope);
  Var alpha = tape.segment_softmax(act, es);
  Var alpha_used = alpha;
  if (dropout_p > Real(0) && rng != nullptr) {
    alpha_used = tape.dropout(alpha, dropout_p, *rng);
  }
  Var out = tape.elu(tape.segment_weighted_rows(alpha_used, wx, es));
  return {out, alpha};
}

/// One temporal attention head over one node's own sequence [T x D']:
/// scaled dot-product attention restricted by the causal mask.
template <class Real>
Var temporal_attention_forward(TapeT<Real>& tape, Var x, Var wq, Var wk, Var wv,
                               const TensorT<Real>& mask, FlopCounter* flops = nullptr,
                               TensorT<Real>* beta_sink = nullptr) {
  const std::size_t steps = tape.value(x).dim(0);
  const std::size_t head_dim = tape.value(wq).dim(1);
  Var q = tape.matmul(x, wq);
  Var k = tape.matmul(x, wk);
  Var v = tape.matmul(x, wv);
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(head_dim));
  return tape.masked_attention(q, k, v, mask, steps, 1, scale, Real(0), nullptr, beta_sink,
                               flops);
}

/// Eqs. of multi-head attention reduce to feature-axis concatenation.
template <class Real>
Var multi_head_forward(TapeT<Real>& tape, const std::vector<Var>& head_outputs) {
  return tape.concat_cols(head_outputs);
}

template <class Real>
struct ModelOutputT {
  Var embeddings{};      // [T*V x d]
  Var structural_out{};  // [T*V x f], before position embeddings
  std::size_t steps = 0;
  std::size_t nodes = 0;
};

namespace detail {

/// Structural block on one snapshot; shared parameters across snapshots.
template <class Real>
Var structural_block(TapeT<Real>& tape, const EdgeStructure& es, FeatureInputT<Real> x,
                     const ParamVarsT<Real>& pv, const ModelConfig& cfg, int snapshot,
                     const ForwardOptions& opts) {
  if (opts.audit != nullptr) opts.audit->structural_snapshots.push_back(snapshot);
  FeatureInputT<Real> cur = x;
  for (std::size_t l = 0; l < pv.structural.size(); ++l) {
    std::vector<Var> heads;
    heads.reserve(pv.structural[l].size());
    for (std::size_t h = 0; h < pv.structural[l].size(); ++h) {
      auto [weight, attn] = pv.structural[l][h];
      auto head = structural_attention_forward(
          tape, es, cur, weight, attn, static_cast<Real>(cfg.leaky_relu_slope),
          opts.training ? static_cast<Real>(cfg.structural_dropout) : Real(0), opts.rng);
      if (opts.export_sink != nullptr) {
        const auto& a = tape.value(head.alpha);
        for (std::size_t e = 0; e < es.num_entries(); ++e) {
          opts.export_sink->structural.push_back({static_cast<int>(l), static_cast<int>(h),
                                                  snapshot, es.src[e], es.dst[e],
                                                  static_cast<double>(a[e])});
        }
      }
      heads.push_back(head.output);
    }
    cur.var = multi_head_forward(tape, heads);
    cur.identity = false;
  }
  return cur.var;
}

/// Position embeddings, temporal block and the final affine map, applied to
/// the stacked per-step representations [T*V x f].
template <class Real>
Var temporal_tail(TapeT<Real>& tape, Var h_stack, const ParamVarsT<Real>& pv,
                  const ModelConfig& cfg, std::size_t steps, std::size_t nodes,
                  const ForwardOptions& opts) {
  Var cur = h_stack;
  if (!cfg.ablate_temporal) {
    cur = tape.add_position(cur, pv.position, steps, nodes);
    const TensorT<Real> mask = build_causal_mask<Real>(steps, cfg.window);
    for (std::size_t l = 0; l < pv.temporal.size(); ++l) {
      std::vector<Var> heads;
      heads.reserve(pv.temporal[l].size());
      for (std::size_t h = 0; h < pv.temporal[l].size(); ++h) {
        const auto& [wq, wk, wv] = pv.temporal[l][h];
        Var q = tape.matmul(cur, wq);
        Var k = tape.matmul(cur, wk);
        Var v = tape.matmul(cur, wv);
        const std::size_t head_dim = tape.value(wq).dim(1);
        const Real scale = Real(1) / std::sqrt(static_cast<Real>(head_dim));
        TensorT<Real> beta_sink;
        const bool want_beta = opts.export_sink != nullptr;
        if (want_beta) beta_sink = TensorT<Real>({nodes, steps, steps});
        Var att = tape.masked_attention(
            q, k, v, mask, steps, nodes, scale,
            opts.training ? static_cast<Real>(cfg.temporal_dropout) : Real(0), opts.rng,
            want_beta ? &beta_sink : nullptr, opts.flops);
        if (want_beta) {
          for (std::size_t node = 0; node < nodes; ++node)
            for (std::size_t i = 0; i < steps; ++i)
              for (std::size_t j = 0; j <= i; ++j) {
                if (mask.at(i, j) != Real(0)) continue;
                opts.export_sink->temporal.push_back(
                    {static_cast<int>(l), static_cast<int>(h), static_cast<NodeId>(node),
                     static_cast<int>(i), static_cast<int>(j),
                     static_cast<double>(beta_sink[(node * steps + i) * steps + j])});
              }
        }
        heads.push_back(att);
      }
      cur = multi_head_forward(tape, heads);
    }
  }
  return tape.add_row_broadcast(tape.matmul(cur, pv.ff_weight), pv.ff_bias);
}

}  // namespace detail

/// Full forward pass over a snapshot sequence: structural block per snapshot
/// with shared parameters, position embeddings, causal temporal block, final
/// affine map. Edge structures must outlive the tape.
template <class Real>
ModelOutputT<Real> model_forward(TapeT<Real>& tape, const std::vector<EdgeStructure>& structs,
                                 const TensorT<Real>& features, bool features_one_hot,
                                 const ParamVarsT<Real>& pv, const ModelConfig& cfg,
                                 const ForwardOptions& opts = {}) {
  const std::size_t steps = structs.size();
  const std::size_t nodes = structs.empty() ? 0 : structs[0].num_nodes();
  if (steps == 0) throw ConfigError("model_forward: empty sequence");
  if (opts.flops != nullptr) tape.set_flop_counter(opts.flops);

  FeatureInputT<Real> x;
  x.identity = features_one_hot;
  if (!features_one_hot || cfg.ablate_structural) x.var = tape.constant(features);

  std::vector<Var> h_steps;
  h_steps.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    if (cfg.ablate_structural) {
      h_steps.push_back(x.var);
    } else {
      h_steps.push_back(
          detail::structural_block(tape, structs[t], x, pv, cfg, static_cast<int>(t), opts));
    }
  }
  Var h_stack = steps == 1 ? h_steps[0] : tape.concat_rows(h_steps);

  ModelOutputT<Real> out;
  out.steps = steps;
  out.nodes = nodes;
  out.structural_out = h_stack;
  out.embeddings = detail::temporal_tail(tape, h_stack, pv, cfg, steps, nodes, opts);
  return out;
}

/// Incremental forward: structural block runs only on the latest snapshot;
/// earlier steps come from stored representations and receive no gradient.
template <class Real>
ModelOutputT<Real> incremental_forward(TapeT<Real>& tape,
                                       const std::vector<TensorT<Real>>& stored_h,
                                       const EdgeStructure& latest,
                                       const TensorT<Real>& features, bool features_one_hot,
                                       const ParamVarsT<Real>& pv, const ModelConfig& cfg,
                                       const ForwardOptions& opts = {}) {
  const std::size_t steps = stored_h.size() + 1;
  const std::size_t nodes = latest.num_nodes();
  const int latest_index = static_cast<int>(steps) - 1;

  FeatureInputT<Real> x;
  x.identity = features_one_hot;
  if (!features_one_hot || cfg.ablate_structural) x.var = tape.constant(features);

  std::vector<Var> h_steps;
  h_steps.reserve(steps);
  for (const auto& h : stored_h) h_steps.push_back(tape.constant(h));
  Var h_latest = cfg.ablate_structural
                     ? x.var
                     : detail::structural_block(tape, latest, x, pv, cfg, latest_index, opts);
  h_steps.push_back(h_latest);
  Var h_stack = tape.concat_rows(h_steps);

  ModelOutputT<Real> out;
  out.steps = steps;
  out.nodes = nodes;
  out.structural_out = h_stack;
  out.embeddings = detail::temporal_tail(tape, h_stack, pv, cfg, steps, nodes, opts);
  return out;
}

/// Per-step [V x d] views of a stacked [T*V x d] tensor.
template <class Real>
std::vector<TensorT<Real>> split_steps(const TensorT<Real>& stacked, std::size_t steps,
                                       std::size_t nodes) {
  const std::size_t d = stacked.dim(1);
  std::vector<TensorT<Real>> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    TensorT<Real> m({nodes, d});
    for (std::size_t i = 0; i < nodes * d; ++i) m[i] = stacked[t * nodes * d + i];
    out.push_back(std::move(m));
  }
  return out;
}

// ---- checkpoints ------------------------------------------------------------

struct CheckpointMeta {
  std::size_t num_nodes = 0;
  std::size_t input_dim = 0;
  std::size_t steps = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& params, const ModelConfig& cfg,
                     const CheckpointMeta& meta);

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
  CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::string& path);

/// Eval-mode forward collecting the exact attention weights.
AttentionExport export_attention_weights(const SnapshotSequence& seq, const FeatureMatrix& x,
                                         const ModelParams& params, const ModelConfig& cfg);

void write_structural_attention_csv(const AttentionExport& exp, const std::string& path);
void write_temporal_attention_csv(const AttentionExport& exp, const std::string& path);

}  // namespace dysat
