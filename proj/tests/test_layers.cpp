#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <map>
#include <tuple>

#include "dysat/gradcheck.hpp"
#include "dysat/layers.hpp"
#include "oracles.hpp"

using namespace dysat;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RngEngine& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform_range(rng, -scale, scale);
  return t;
}

Snapshot random_snapshot(std::size_t n, double density, RngEngine& rng) {
  std::vector<WeightedEdge> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      if (uniform_real(rng) < density) edges.push_back({u, v, uniform_range(rng, 0.2, 3.0)});
    }
  }
  return Snapshot(n, edges);
}

ModelConfig tiny_config(std::size_t heads = 2, std::size_t dim = 3) {
  ModelConfig cfg;
  cfg.structural_layers = {{heads, dim}};
  cfg.temporal_layers = {{heads, dim}};
  cfg.final_dim = 4;
  cfg.structural_dropout = 0.0;
  cfg.temporal_dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("causal mask shape and orientation") {
  const auto m1 = build_causal_mask<double>(1);
  CHECK(m1.at(0, 0) == 0.0);

  const auto m3 = build_causal_mask<double>(3);
  const double ninf = -std::numeric_limits<double>::infinity();
  const double expected[3][3] = {{0, ninf, ninf}, {0, 0, ninf}, {0, 0, 0}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(m3.at(i, j) == expected[i][j]);

  // row sums of exp(M) count the unmasked positions
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) s += std::exp(m3.at(i, j));
    CHECK(s == doctest::Approx(i + 1.0));
  }

  const auto banded = build_causal_mask<double>(4, 2);
  CHECK(banded.at(3, 1) == ninf);  // outside the 2-step window
  CHECK(banded.at(3, 2) == 0.0);
  CHECK(banded.at(3, 3) == 0.0);
  CHECK(banded.at(1, 0) == 0.0);
}

TEST_CASE("structural attention: singleton neighborhood gives z = elu(Wx_v)") {
  RngEngine rng(3);
  Snapshot s(3, {{0, 1, 2.0}});  // node 2 isolated
  const auto es = build_edge_structure(s);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor a = random_tensor({6}, rng);

  Tape tape;
  FeatureInputT<double> feat{tape.constant(x), false};
  auto head = structural_attention_forward<double>(tape, es, feat, tape.constant(w),
                                                   tape.constant(a), 0.2);
  const Tensor& alpha = tape.value(head.alpha);
  // node 2's segment has only the self entry
  CHECK(alpha[es.offsets[2]] == doctest::Approx(1.0).epsilon(1e-15));

  const Tensor wx = oracle::matmul(x, w);
  const Tensor& z = tape.value(head.output);
  for (std::size_t f = 0; f < 3; ++f) {
    CHECK(z.at(2, f) == doctest::Approx(oracle::elu(wx.at(2, f))).epsilon(1e-12));
  }
}

TEST_CASE("structural attention: identical neighbors share attention uniformly") {
  // star with equal weights and identical leaf features
  Snapshot s(4, {{0, 1, 1.0}, {0, 2, 1.0}, {0, 3, 1.0}});
  const auto es = build_edge_structure(s);
  Tensor x({4, 2});
  for (std::size_t v = 0; v < 4; ++v) {
    x.at(v, 0) = v == 0 ? 0.3 : 0.7;  // all leaves identical, center too (weight-1 self entry)
    x.at(v, 1) = v == 0 ? 0.3 : 0.7;
  }
  x.at(0, 0) = 0.7;
  x.at(0, 1) = 0.7;  // make every participant identical so logits tie exactly
  RngEngine rng(5);
  Tensor w = random_tensor({2, 3}, rng);
  Tensor a = random_tensor({6}, rng);

  Tape tape;
  FeatureInputT<double> feat{tape.constant(x), false};
  auto head = structural_attention_forward<double>(tape, es, feat, tape.constant(w),
                                                   tape.constant(a), 0.2);
  const Tensor& alpha = tape.value(head.alpha);
  // center segment: 3 neighbors + self, all with identical features and weights
  const std::size_t lo = es.offsets[0], hi = es.offsets[1];
  REQUIRE(hi - lo == 4);
  for (std::size_t e = lo; e < hi; ++e) CHECK(alpha[e] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("structural attention matches the explicit-loop reference on a triangle") {
  Snapshot s(3, {{0, 1, 1.5}, {1, 2, 0.5}, {0, 2, 2.0}});
  const auto es = build_edge_structure(s);
  RngEngine rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({3, 3}, rng, 0.8);
    Tensor w = random_tensor({3, 2}, rng, 0.8);
    Tensor a = random_tensor({4}, rng, 0.8);
    Tape tape;
    FeatureInputT<double> feat{tape.constant(x), false};
    auto head = structural_attention_forward<double>(tape, es, feat, tape.constant(w),
                                                     tape.constant(a), 0.2);
    const Tensor expected = oracle::structural_attention(s, x, w, a, 0.2);
    const Tensor& got = tape.value(head.output);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::abs(got[i] - expected[i]) <= 1e-10);
    }
  }
}

TEST_CASE("identity feature shortcut equals the explicit one-hot matmul") {
  RngEngine rng(9);
  Snapshot s = random_snapshot(5, 0.5, rng);
  const auto es = build_edge_structure(s);
  Tensor w = random_tensor({5, 3}, rng);
  Tensor a = random_tensor({6}, rng);
  Tensor eye({5, 5});
  for (std::size_t i = 0; i < 5; ++i) eye.at(i, i) = 1.0;

  Tape tape;
  FeatureInputT<double> one_hot{Var{}, true};
  auto fast = structural_attention_forward<double>(tape, es, one_hot, tape.constant(w),
                                                   tape.constant(a), 0.2);
  FeatureInputT<double> dense{tape.constant(eye), false};
  auto slow = structural_attention_forward<double>(tape, es, dense, tape.constant(w),
                                                   tape.constant(a), 0.2);
  const Tensor& zf = tape.value(fast.output);
  const Tensor& zs = tape.value(slow.output);
  for (std::size_t i = 0; i < zf.size(); ++i) CHECK(zf[i] == doctest::Approx(zs[i]).epsilon(1e-14));
}

TEST_CASE("temporal attention single step and mask-forced first row") {
  RngEngine rng(11);
  SUBCASE("T=1 reduces to X Wv") {
    Tensor x = random_tensor({1, 4}, rng);
    Tensor wq = random_tensor({4, 3}, rng), wk = random_tensor({4, 3}, rng),
           wv = random_tensor({4, 3}, rng);
    Tape tape;
    const auto mask = build_causal_mask<double>(1);
    Tensor beta({1, 1, 1});
    Var out = temporal_attention_forward<double>(tape, tape.constant(x), tape.constant(wq),
                                                 tape.constant(wk), tape.constant(wv), mask,
                                                 nullptr, &beta);
    CHECK(beta[0] == 1.0);
    const Tensor expected = oracle::matmul(x, wv);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(tape.value(out)[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
  }
  SUBCASE("row 0 is always [1, 0, ...]") {
    Tensor x = random_tensor({4, 4}, rng, 3.0);
    Tensor wq = random_tensor({4, 2}, rng), wk = random_tensor({4, 2}, rng),
           wv = random_tensor({4, 2}, rng);
    Tape tape;
    const auto mask = build_causal_mask<double>(4);
    Tensor beta({1, 4, 4});
    temporal_attention_forward<double>(tape, tape.constant(x), tape.constant(wq),
                                       tape.constant(wk), tape.constant(wv), mask, nullptr,
                                       &beta);
    CHECK(beta[0] == 1.0);
    for (std::size_t j = 1; j < 4; ++j) CHECK(beta[j] == 0.0);
  }
}

TEST_CASE("temporal attention matches the explicit-loop reference at T=3") {
  RngEngine rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({3, 3}, rng);
    Tensor wq = random_tensor({3, 2}, rng), wk = random_tensor({3, 2}, rng),
           wv = random_tensor({3, 2}, rng);
    Tape tape;
    const auto mask = build_causal_mask<double>(3);
    Var out = temporal_attention_forward<double>(tape, tape.constant(x), tape.constant(wq),
                                                 tape.constant(wk), tape.constant(wv), mask);
    const Tensor expected = oracle::temporal_attention(x, wq, wk, wv);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(std::abs(tape.value(out)[i] - expected[i]) <= 1e-10);
    }
  }
}

TEST_CASE("multi-head concatenation") {
  RngEngine rng(17);
  Tape tape;
  Tensor a = random_tensor({4, 3}, rng), b = random_tensor({4, 3}, rng);
  Var va = tape.constant(a), vb = tape.constant(b);

  SUBCASE("one head is the identity") {
    const Tensor& out = tape.value(multi_head_forward<double>(tape, {va}));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(out[i] == a[i]);
  }
  SUBCASE("two heads of width three concatenate to six") {
    const Tensor& out = tape.value(multi_head_forward<double>(tape, {va, vb}));
    CHECK(out.dim(1) == 6);
    CHECK(out.at(2, 1) == a.at(2, 1));
    CHECK(out.at(2, 4) == b.at(2, 1));
  }
  SUBCASE("permuting heads permutes output blocks") {
    const Tensor& ab = tape.value(multi_head_forward<double>(tape, {va, vb}));
    const Tensor& ba = tape.value(multi_head_forward<double>(tape, {vb, va}));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(ab.at(i, j) == ba.at(i, j + 3));
        CHECK(ab.at(i, j + 3) == ba.at(i, j));
      }
  }
}

TEST_CASE("model forward: uniform causal averaging with zeroed temporal projections") {
  // Wq = Wk = 0 makes every unmasked logit zero, so attention averages
  // history uniformly; Wv = I passes values through; zero positions and an
  // identity affine map expose the average directly.
  RngEngine rng(19);
  SnapshotSequence seq;
  seq.num_nodes = 4;
  for (int t = 0; t < 3; ++t) seq.snapshots.push_back(random_snapshot(4, 0.6, rng));
  const auto structs = build_edge_structures(seq);

  ModelConfig cfg = tiny_config(1, 3);
  cfg.temporal_layers = {{1, 3}};
  cfg.final_dim = 3;
  auto params = init_params<double>(cfg, 4, 3, 42);
  params.position.fill(0.0);
  for (auto& layer : params.temporal) {
    for (auto& head : layer) {
      head.wq.fill(0.0);
      head.wk.fill(0.0);
      head.wv.fill(0.0);
      for (std::size_t i = 0; i < 3; ++i) head.wv.at(i, i) = 1.0;
    }
  }
  params.ff_weight.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) params.ff_weight.at(i, i) = 1.0;
  params.ff_bias.fill(0.0);

  Tensor features({4, 4});
  for (std::size_t i = 0; i < 4; ++i) features.at(i, i) = 1.0;

  Tape tape;
  auto pv = bind_params(tape, params, false);
  auto out = model_forward<double>(tape, structs, features, true, pv, cfg);
  const auto h = split_steps(tape.value(out.structural_out), 3, 4);
  const auto e = split_steps(tape.value(out.embeddings), 3, 4);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t v = 0; v < 4; ++v) {
      for (std::size_t f = 0; f < 3; ++f) {
        double avg = 0.0;
        for (std::size_t s = 0; s <= t; ++s) avg += h[s].at(v, f);
        avg /= static_cast<double>(t + 1);
        CHECK(e[t].at(v, f) == doctest::Approx(avg).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("causality: future snapshots cannot change earlier embeddings, bitwise") {
  RngEngine rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t nodes = 5, steps = 4;
    SnapshotSequence seq;
    seq.num_nodes = nodes;
    for (std::size_t t = 0; t < steps; ++t) seq.snapshots.push_back(random_snapshot(nodes, 0.5, rng));

    ModelConfig cfg = tiny_config();
    auto params = init_params<double>(cfg, nodes, steps, 100 + trial);
    Tensor features({nodes, nodes});
    for (std::size_t i = 0; i < nodes; ++i) features.at(i, i) = 1.0;

    auto run = [&](const SnapshotSequence& sq) {
      const auto structs = build_edge_structures(sq);
      Tape tape;
      auto pv = bind_params(tape, params, false);
      auto out = model_forward<double>(tape, structs, features, true, pv, cfg);
      return tape.value(out.embeddings);
    };
    const Tensor base = run(seq);

    // rewrite the last snapshot entirely
    SnapshotSequence mutated = seq;
    mutated.snapshots[steps - 1] = random_snapshot(nodes, 0.9, rng);
    const Tensor changed = run(mutated);

    const std::size_t row_elems = base.dim(1);
    for (std::size_t t = 0; t + 1 < steps; ++t) {
      for (std::size_t i = 0; i < nodes * row_elems; ++i) {
        const double a = base[t * nodes * row_elems + i];
        const double b = changed[t * nodes * row_elems + i];
        CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
      }
    }
  }
}

TEST_CASE("node permutation equivariance") {
  RngEngine rng(29);
  const std::size_t nodes = 5, steps = 2;
  SnapshotSequence seq;
  seq.num_nodes = nodes;
  for (std::size_t t = 0; t < steps; ++t) seq.snapshots.push_back(random_snapshot(nodes, 0.6, rng));

  ModelConfig cfg = tiny_config();
  auto params = init_params<double>(cfg, nodes, steps, 7);
  Tensor features({nodes, nodes});
  for (std::size_t i = 0; i < nodes; ++i) features.at(i, i) = 1.0;

  // permutation pi
  std::vector<NodeId> pi = {2, 0, 4, 1, 3};
  SnapshotSequence perm_seq;
  perm_seq.num_nodes = nodes;
  for (const auto& s : seq.snapshots) {
    std::vector<WeightedEdge> edges;
    for (const auto& e : s.edge_list()) edges.push_back({pi[e.u], pi[e.v], e.weight});
    perm_seq.snapshots.emplace_back(nodes, edges);
  }
  // permute first-layer weight rows (one-hot inputs select rows by node id)
  auto perm_params = params;
  for (auto& head : perm_params.structural[0]) {
    Tensor w = head.weight;
    for (std::size_t v = 0; v < nodes; ++v)
      for (std::size_t f = 0; f < w.dim(1); ++f) w.at(pi[v], f) = head.weight.at(v, f);
    head.weight = w;
  }

  auto run = [&](const SnapshotSequence& sq, const ModelParams& p) {
    const auto structs = build_edge_structures(sq);
    Tape tape;
    auto pv = bind_params(tape, p, false);
    auto out = model_forward<double>(tape, structs, features, true, pv, cfg);
    return split_steps(tape.value(out.embeddings), steps, nodes);
  };
  const auto base = run(seq, params);
  const auto perm = run(perm_seq, perm_params);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t v = 0; v < nodes; ++v) {
      for (std::size_t f = 0; f < cfg.final_dim; ++f) {
        CHECK(perm[t].at(pi[v], f) == doctest::Approx(base[t].at(v, f)).epsilon(1e-11));
      }
    }
  }
}

TEST_CASE("shape contract across the stack") {
  RngEngine rng(31);
  const std::size_t nodes = 6, steps = 3;
  SnapshotSequence seq;
  seq.num_nodes = nodes;
  for (std::size_t t = 0; t < steps; ++t) seq.snapshots.push_back(random_snapshot(nodes, 0.5, rng));
  const auto structs = build_edge_structures(seq);

  ModelConfig cfg;
  cfg.structural_layers = {{2, 4}, {2, 3}};  // f = 6
  cfg.temporal_layers = {{3, 2}};            // temporal out = 6
  cfg.final_dim = 5;
  cfg.structural_dropout = cfg.temporal_dropout = 0.0;
  auto params = init_params<double>(cfg, nodes, steps, 3);
  Tensor features({nodes, nodes});
  for (std::size_t i = 0; i < nodes; ++i) features.at(i, i) = 1.0;

  Tape tape;
  auto pv = bind_params(tape, params, false);
  auto out = model_forward<double>(tape, structs, features, true, pv, cfg);
  CHECK(tape.value(out.structural_out).dim(0) == steps * nodes);
  CHECK(tape.value(out.structural_out).dim(1) == 6);
  CHECK(tape.value(out.embeddings).dim(0) == steps * nodes);
  CHECK(tape.value(out.embeddings).dim(1) == 5);
}

TEST_CASE("structural and temporal layers pass gradient checks") {
  RngEngine rng(37);
  SUBCASE("structural head") {
    Snapshot s(4, {{0, 1, 1.2}, {1, 2, 0.7}, {2, 3, 2.0}, {0, 3, 1.0}});
    static const auto es = build_edge_structure(s);
    Tensor x = random_tensor({4, 3}, rng, 0.7);
    Tensor w = random_tensor({3, 2}, rng, 0.7);
    Tensor a = random_tensor({4}, rng, 0.7);
    auto build = [&](Tape& t, const std::vector<Var>& l) {
      FeatureInputT<double> feat{l[0], false};
      auto head = structural_attention_forward<double>(t, es, feat, l[1], l[2], 0.2);
      return t.sum(head.output);
    };
    auto report = grad_check(build, {{"x", &x}, {"w", &w}, {"a", &a}}, 1e-6, 1e-6);
    CHECK(report.pass);
  }
  SUBCASE("temporal head, batched over nodes") {
    const std::size_t steps = 3, nodes = 2, dim = 3, head_dim = 2;
    Tensor x = random_tensor({steps * nodes, dim}, rng, 0.8);
    Tensor wq = random_tensor({dim, head_dim}, rng, 0.8);
    Tensor wk = random_tensor({dim, head_dim}, rng, 0.8);
    Tensor wv = random_tensor({dim, head_dim}, rng, 0.8);
    static const auto mask = build_causal_mask<double>(steps);
    auto build = [&](Tape& t, const std::vector<Var>& l) {
      Var q = t.matmul(l[0], l[1]);
      Var k = t.matmul(l[0], l[2]);
      Var v = t.matmul(l[0], l[3]);
      Var att = t.masked_attention(q, k, v, mask, steps, nodes,
                                   1.0 / std::sqrt(double(head_dim)), 0.0, nullptr, nullptr,
                                   nullptr);
      return t.sum(att);
    };
    auto report =
        grad_check(build, {{"x", &x}, {"wq", &wq}, {"wk", &wk}, {"wv", &wv}}, 1e-6, 1e-6);
    CHECK(report.pass);
  }
}

TEST_CASE("attention export: near-uniform untrained weights, stochastic rows, causal support") {
  RngEngine rng(41);
  SnapshotSequence seq;
  seq.num_nodes = 5;
  seq.snapshots.push_back(random_snapshot(5, 0.6, rng));
  seq.snapshots.push_back(random_snapshot(5, 0.6, rng));

  ModelConfig cfg = tiny_config();
  auto params = init_params<double>(cfg, 5, 2, 11);
  // shrink weights toward zero so temporal logits are tiny
  for (auto& layer : params.temporal)
    for (auto& head : layer)
      for (auto* t : {&head.wq, &head.wk, &head.wv})
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] *= 0.05;

  FeatureMatrix features = FeatureMatrix::identity(5);
  const auto exp = export_attention_weights(seq, features, params, cfg);

  // beta row for step 1 should sit near [0.5, 0.5]
  for (const auto& row : exp.temporal) {
    CHECK(row.j <= row.i);  // causal support only
    if (row.i == 1) CHECK(std::abs(row.beta - 0.5) < 0.05);
  }

  // alpha rows sum to 1 within 1e-12 per (layer, head, snapshot, v)
  std::map<std::tuple<int, int, int, NodeId>, double> alpha_sums;
  for (const auto& row : exp.structural) {
    alpha_sums[{row.layer, row.head, row.snapshot, row.v}] += row.alpha;
  }
  for (const auto& [key, total] : alpha_sums) CHECK(std::abs(total - 1.0) <= 1e-12);

  // beta rows sum to 1 as well
  std::map<std::tuple<int, int, NodeId, int>, double> beta_sums;
  for (const auto& row : exp.temporal) {
    beta_sums[{row.layer, row.head, row.node, row.i}] += row.beta;
  }
  for (const auto& [key, total] : beta_sums) CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("temporal-attention flop count grows ~4x when the history window doubles") {
  RngEngine rng(47);
  auto count_flops = [&](std::size_t window) {
    SnapshotSequence seq;
    seq.num_nodes = 6;
    for (std::size_t t = 0; t < window; ++t) seq.snapshots.push_back(random_snapshot(6, 0.5, rng));
    const auto structs = build_edge_structures(seq);
    ModelConfig cfg = tiny_config(1, 4);
    auto params = init_params<double>(cfg, 6, window, 3);
    Tensor eye({6, 6});
    for (std::size_t i = 0; i < 6; ++i) eye.at(i, i) = 1.0;
    FlopCounter flops;
    Tape tape;
    auto pv = bind_params(tape, params, false);
    ForwardOptions opts;
    opts.flops = &flops;
    model_forward<double>(tape, structs, eye, true, pv, cfg, opts);
    CHECK(flops.total_flops > flops.temporal_attention_flops);  // projections counted too
    return flops.temporal_attention_flops;
  };
  const auto f4 = count_flops(4);
  const auto f8 = count_flops(8);
  // sum over rows of the causal band: W(W+1)/2, so 4 -> 8 gives 36/10
  CHECK(f8 == f4 * 36 / 10);
  const double ratio = static_cast<double>(f8) / static_cast<double>(f4);
  CHECK(ratio > 3.0);
  CHECK(ratio <= 4.2);
}

TEST_CASE("config validation rejects inconsistent dimensions up front") {
  ModelConfig cfg = tiny_config();
  cfg.structural_layers[0].heads = 0;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);

  ModelConfig both = tiny_config();
  both.ablate_structural = both.ablate_temporal = true;
  CHECK_THROWS_AS(both.validate(4), ConfigError);

  ModelConfig bad_dropout = tiny_config();
  bad_dropout.temporal_dropout = 1.0;
  CHECK_THROWS_AS(bad_dropout.validate(4), ConfigError);
}

TEST_CASE("checkpoint round trip preserves parameters and config") {
  RngEngine rng(43);
  ModelConfig cfg = tiny_config(2, 3);
  cfg.window = 5;
  auto params = init_params<double>(cfg, 6, 3, 17);
  CheckpointMeta meta{6, 6, 3};
  const std::string path =
      (std::filesystem::temp_directory_path() / "dysat_ck.bin").string();
  save_checkpoint(path, params, cfg, meta);
  auto back = load_checkpoint(path);
  CHECK(back.meta.num_nodes == 6);
  CHECK(back.meta.steps == 3);
  CHECK(back.config.window == 5);
  CHECK(back.config.structural_layers[0].heads == 2);

  auto orig_refs = collect_params(params);
  auto back_refs = collect_params(back.params);
  REQUIRE(orig_refs.size() == back_refs.size());
  for (std::size_t i = 0; i < orig_refs.size(); ++i) {
    CHECK(orig_refs[i].name == back_refs[i].name);
    REQUIRE(orig_refs[i].tensor->size() == back_refs[i].tensor->size());
    for (std::size_t j = 0; j < orig_refs[i].tensor->size(); ++j) {
      const double a = (*orig_refs[i].tensor)[j], b = (*back_refs[i].tensor)[j];
      CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
  }
}
