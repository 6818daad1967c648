// Command-line front end: dataset preprocessing, training (full and
// incremental), the link-prediction evaluation protocol, embedding/attention
// export, a synthetic-data generator, and a timing harness for the temporal
// window cost model.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "dysat/evaluation.hpp"
#include "dysat/synth.hpp"
#include "dysat/tensor_io.hpp"
#include "dysat/training.hpp"

namespace {

using namespace dysat;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
  std::string dataset;
  std::size_t num_nodes = 0;
  std::string features_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int threads = 1;
};

struct ModelOpts {
  std::string structural_layers = "16:8";
  std::string temporal_layers = "16:8";
  std::size_t final_dim = 128;
  std::size_t window = 0;
  double structural_dropout = 0.1;
  double temporal_dropout = 0.5;
  double slope = 0.2;
  std::string ablate;  // "", "structural", "temporal"
};

struct TrainOpts {
  double lr = 1e-3;
  double w_n = 1.0;
  double l2 = 5e-4;
  int batch_nodes = 256;
  int epochs = 200;
  int pairs_cap = 100;
  bool resample_walks = false;
  std::string selection = "val-auc";
  std::string precision = "f64";
  std::size_t upto = 0;  // 0 = all snapshots
  bool incremental = false;
  std::string store_dir;
};

struct SamplerOpts {
  int walks_per_node = 10;
  int walk_length = 40;
  int context_window = 10;
  int negatives = 10;
  double smoothing = 0.75;
};

std::vector<LayerSpec> parse_layers(const std::string& s) {
  std::vector<LayerSpec> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("layer spec must be `heads:dim[,heads:dim...]`, got " + s);
    }
    out.push_back({std::stoul(item.substr(0, colon)), std::stoul(item.substr(colon + 1))});
  }
  return out;
}

ModelConfig to_model_config(const ModelOpts& m) {
  ModelConfig cfg;
  cfg.structural_layers = parse_layers(m.structural_layers);
  cfg.temporal_layers = parse_layers(m.temporal_layers);
  cfg.final_dim = m.final_dim;
  cfg.window = m.window;
  cfg.structural_dropout = m.structural_dropout;
  cfg.temporal_dropout = m.temporal_dropout;
  cfg.leaky_relu_slope = m.slope;
  if (m.ablate == "structural") {
    cfg.ablate_structural = true;
  } else if (m.ablate == "temporal") {
    cfg.ablate_temporal = true;
  } else if (!m.ablate.empty()) {
    throw ConfigError("--ablate takes `structural` or `temporal`");
  }
  return cfg;
}

TrainConfig to_train_config(const TrainOpts& t, const CommonOpts& c) {
  TrainConfig cfg;
  cfg.learning_rate = t.lr;
  cfg.w_n = t.w_n;
  cfg.l2 = t.l2;
  cfg.batch_nodes = t.batch_nodes;
  cfg.max_epochs = t.epochs;
  cfg.pairs_per_node_cap = t.pairs_cap;
  cfg.resample_walks_per_epoch = t.resample_walks;
  cfg.selection = t.selection;
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  return cfg;
}

SamplerConfig to_sampler_config(const SamplerOpts& s, const CommonOpts& c) {
  SamplerConfig cfg;
  cfg.walks_per_node = s.walks_per_node;
  cfg.walk_length = s.walk_length;
  cfg.window = s.context_window;
  cfg.negatives_per_positive = s.negatives;
  cfg.smoothing = s.smoothing;
  cfg.seed = c.seed;
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_dataset = true) {
  cmd->fallthrough();
  auto* ds = cmd->add_option("--dataset", o.dataset, "snapshot edge list (`t u v w` lines)");
  auto* nn = cmd->add_option("--num-nodes", o.num_nodes, "size of the shared node set");
  if (needs_dataset) {
    ds->required();
    nn->required();
  }
  cmd->add_option("--features", o.features_path,
                  "TSV node features (node id then D reals); default 1-hot");
  cmd->add_option("--out", o.out_dir, "output directory")->envname("DYSAT_OUT_DIR");
  cmd->add_option("--seed", o.seed, "base RNG seed");
  cmd->add_option("--threads", o.threads, "worker thread bound");
}

void add_model(CLI::App* cmd, ModelOpts& m) {
  cmd->add_option("--structural-layers", m.structural_layers, "heads:dim[,heads:dim...]");
  cmd->add_option("--temporal-layers", m.temporal_layers, "heads:dim[,heads:dim...]");
  cmd->add_option("--final-dim", m.final_dim, "output embedding dimension d");
  cmd->add_option("--window", m.window, "temporal attention window (0 = all history)");
  cmd->add_option("--structural-dropout", m.structural_dropout,
                  "dropout on structural attention weights");
  cmd->add_option("--temporal-dropout", m.temporal_dropout,
                  "dropout on temporal attention weights");
  cmd->add_option("--slope", m.slope, "leaky-relu slope for attention logits");
  cmd->add_option("--ablate", m.ablate, "drop one block: structural | temporal");
}

void add_train(CLI::App* cmd, TrainOpts& t) {
  cmd->add_option("--lr", t.lr, "Adam learning rate");
  cmd->add_option("--wn", t.w_n, "negative sampling ratio in the objective");
  cmd->add_option("--l2", t.l2, "weight decay on weight matrices");
  cmd->add_option("--batch-nodes", t.batch_nodes, "nodes per minibatch");
  cmd->add_option("--epochs", t.epochs, "maximum training epochs");
  cmd->add_option("--pairs-cap", t.pairs_cap,
                  "positive pairs per (node, step) per epoch; 0 = all");
  cmd->add_flag("--resample-walks", t.resample_walks, "regenerate walks every epoch");
  cmd->add_option("--selection", t.selection, "model selection: val-auc | loss");
  cmd->add_option("--precision", t.precision, "training arithmetic: f64 | f32");
}

void add_sampler(CLI::App* cmd, SamplerOpts& s) {
  cmd->add_option("--walks-per-node", s.walks_per_node, "random walks started per node");
  cmd->add_option("--walk-length", s.walk_length, "nodes per walk");
  cmd->add_option("--context-window", s.context_window, "co-occurrence window on walks");
  cmd->add_option("--negatives", s.negatives, "negative samples per positive pair");
  cmd->add_option("--smoothing", s.smoothing, "degree-smoothing exponent of P_n");
}

SnapshotSequence load_dataset(const CommonOpts& c) {
  if (c.dataset.empty()) throw ConfigError("missing --dataset");
  if (!std::filesystem::exists(c.dataset)) {
    throw ConfigError("dataset path does not exist: " + c.dataset);
  }
  return load_snapshots(c.dataset, c.num_nodes);
}

FeatureMatrix load_feature_matrix(const CommonOpts& c) {
  if (c.features_path.empty()) return FeatureMatrix::identity(c.num_nodes);
  return load_features(c.features_path, c.num_nodes);
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path);
  os << "epoch,loss,val_auc\n";
  for (const auto& rec : history) {
    os << rec.epoch << ',' << format_value(rec.loss) << ',';
    if (std::isnan(rec.val_auc)) {
      os << "";
    } else {
      os << format_value(rec.val_auc);
    }
    os << '\n';
  }
}

/// Validation scorer on the next snapshot's links, mirroring the evaluation
/// protocol; also strips the held-out validation links from the training
/// prefix. Returns the (possibly modified) training sequence.
SnapshotSequence attach_next_step_scorer(const SnapshotSequence& full, std::size_t upto,
                                         std::uint64_t seed, ValidationScorer& scorer) {
  SnapshotSequence train_seq = full.prefix(upto);
  if (upto >= full.num_steps()) return train_seq;  // nothing to validate against
  RngEngine rng(derive_seed(seed, stream_tag("cli-val"), upto));
  const LinkExampleSet ex =
      build_examples(full, static_cast<int>(upto) - 1, EvalMode::AllLinks, rng);
  if (ex.empty()) return train_seq;
  const ExampleSplit split = split_examples(ex.pairs, rng);

  // remove validation positives from every training snapshot
  std::set<std::pair<NodeId, NodeId>> val_links;
  for (std::size_t i : split.val) {
    const auto& p = ex.pairs[i];
    if (p.label) val_links.insert({std::min(p.u, p.v), std::max(p.u, p.v)});
  }
  SnapshotSequence cleaned;
  cleaned.num_nodes = train_seq.num_nodes;
  for (const auto& snap : train_seq.snapshots) {
    std::vector<WeightedEdge> kept;
    for (const auto& e : snap.edge_list()) {
      if (val_links.count({std::min(e.u, e.v), std::max(e.u, e.v)}) == 0) kept.push_back(e);
    }
    cleaned.snapshots.emplace_back(train_seq.num_nodes, kept);
  }

  LogisticOptions epoch_opts{1e-4, 300, 1e-6};
  scorer = [ex, split, epoch_opts](const std::vector<Tensor>& emb_steps) {
    const Tensor feats = hadamard_features(emb_steps.back(), ex.pairs);
    std::vector<int> train_labels, val_labels;
    Tensor tf({split.train.size(), feats.dim(1)});
    Tensor vf({split.val.size(), feats.dim(1)});
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      for (std::size_t j = 0; j < feats.dim(1); ++j) {
        tf.at(i, j) = feats.at(split.train[i], j);
      }
      train_labels.push_back(ex.pairs[split.train[i]].label);
    }
    for (std::size_t i = 0; i < split.val.size(); ++i) {
      for (std::size_t j = 0; j < feats.dim(1); ++j) vf.at(i, j) = feats.at(split.val[i], j);
      val_labels.push_back(ex.pairs[split.val[i]].label);
    }
    const Tensor w = logistic_fit(tf, train_labels, epoch_opts);
    return auc(logistic_predict(w, vf), val_labels);
  };
  return cleaned;
}

int cmd_train(const CommonOpts& common, const ModelOpts& model, const TrainOpts& train,
              const SamplerOpts& sampler) {
  const auto full = load_dataset(common);
  const auto features = load_feature_matrix(common);
  const std::size_t upto = train.upto == 0 ? full.num_steps() : train.upto;
  if (upto > full.num_steps()) throw ConfigError("--upto exceeds the number of snapshots");

  ModelConfig model_cfg = to_model_config(model);
  TrainConfig train_cfg = to_train_config(train, common);
  const SamplerConfig sampler_cfg = to_sampler_config(sampler, common);
  model_cfg.validate(features.cols);
  train_cfg.validate();

  std::filesystem::create_directories(common.out_dir);
  const std::string checkpoint_path = common.out_dir + "/checkpoint.bin";
  const std::string history_path = common.out_dir + "/history.csv";

  ValidationScorer scorer = nullptr;
  SnapshotSequence train_seq = full.prefix(upto);
  if (train_cfg.selection == "val-auc") {
    train_seq = attach_next_step_scorer(full, upto, common.seed, scorer);
  }

  std::vector<EpochRecord> history;
  ModelParams params;
  if (train.incremental) {
    if (train.store_dir.empty()) throw ConfigError("--incremental requires --store");
    RepresentationStore store(train.store_dir);
    const std::size_t step_index = upto - 1;
    if (train.precision == "f32") {
      auto res = incremental_fit<float>(full.snapshots[step_index], step_index, store, features,
                                        model_cfg, train_cfg, sampler_cfg, scorer);
      params = cast_params<double>(res.fit.params);
      history = res.fit.history;
    } else {
      auto res = incremental_fit<double>(full.snapshots[step_index], step_index, store, features,
                                         model_cfg, train_cfg, sampler_cfg, scorer);
      params = std::move(res.fit.params);
      history = std::move(res.fit.history);
    }
  } else {
    if (train.precision == "f32") {
      auto res = fit<float>(train_seq, features, model_cfg, train_cfg, sampler_cfg, scorer);
      params = cast_params<double>(res.params);
      history = res.history;
    } else if (train.precision == "f64") {
      auto res = fit<double>(train_seq, features, model_cfg, train_cfg, sampler_cfg, scorer);
      params = std::move(res.params);
      history = std::move(res.history);
    } else {
      throw ConfigError("--precision takes f64 or f32");
    }
  }

  save_checkpoint(checkpoint_path, params, model_cfg,
                  {common.num_nodes, features.cols, upto});
  write_history_csv(history_path, history);
  std::cout << "wrote " << checkpoint_path << " and " << history_path << "\n";
  return kExitOk;
}

int cmd_evaluate(const CommonOpts& common, const ModelOpts& model, const TrainOpts& train,
                 const SamplerOpts& sampler, const std::string& mode_name, int runs, int horizon,
                 bool downstream_only, bool keep_val_links, double classifier_l2,
                 const std::string& checkpoint_path) {
  const auto seq = load_dataset(common);
  const auto features = load_feature_matrix(common);

  EvalConfig ec;
  ec.mode = parse_eval_mode(mode_name);
  ec.runs = runs;
  ec.horizon = horizon;
  ec.seed = common.seed;
  ec.threads = common.threads;
  ec.rerandomize_representation = !downstream_only;
  ec.remove_val_links = !keep_val_links;
  ec.classifier.l2 = classifier_l2;

  EmbeddingProvider provider;
  if (!checkpoint_path.empty()) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.meta.num_nodes != seq.num_nodes) {
      throw ConfigError("checkpoint trained on " + std::to_string(ck.meta.num_nodes) +
                        " nodes, dataset has " + std::to_string(seq.num_nodes));
    }
    if (ck.meta.steps >= seq.num_steps()) {
      throw ConfigError("checkpoint covers every snapshot; nothing left to predict");
    }
    ec.single_step = static_cast<int>(ck.meta.steps) - 1;
    ec.rerandomize_representation = false;
    ec.remove_val_links = false;
    auto structs = std::make_shared<std::vector<EdgeStructure>>(
        build_edge_structures(seq.prefix(ck.meta.steps)));
    auto params = std::make_shared<ModelParams>(ck.params);
    auto cfg = std::make_shared<ModelConfig>(ck.config);
    const Tensor x = features.as_tensor();
    provider = [structs, params, cfg, x, one_hot = features.one_hot](
                   const SnapshotSequence&, std::uint64_t, const ValidationScorer&) {
      Tape tape;
      auto pv = bind_params(tape, *params, false);
      auto out = model_forward<double>(tape, *structs, x, one_hot, pv, *cfg);
      return split_steps(tape.value(out.embeddings), out.steps, out.nodes).back();
    };
  } else {
    ModelConfig model_cfg = to_model_config(model);
    TrainConfig train_cfg = to_train_config(train, common);
    const SamplerConfig sampler_cfg = to_sampler_config(sampler, common);
    model_cfg.validate(features.cols);
    if (train.precision == "f32") {
      provider = [features, model_cfg, train_cfg, sampler_cfg](
                     const SnapshotSequence& train_seq, std::uint64_t seed,
                     const ValidationScorer& scorer) {
        TrainConfig tc = train_cfg;
        tc.seed = seed;
        const auto result = fit<float>(train_seq, features, model_cfg, tc, sampler_cfg, scorer);
        return result.embeddings.back();
      };
    } else {
      provider = make_training_provider(features, model_cfg, train_cfg, sampler_cfg);
    }
  }

  const EvalReport report = evaluate_with(seq, ec, provider);

  std::filesystem::create_directories(common.out_dir);
  const std::string json_path = common.out_dir + "/report.json";
  std::ofstream(json_path) << report.to_json() << "\n";
  report.write_csv(common.out_dir + "/report.csv");
  report.write_step_csv(common.out_dir + "/report_steps.csv");
  std::cout << report.to_json() << "\n";
  std::cout << "wrote " << json_path << ", report.csv, report_steps.csv\n";
  return kExitOk;
}

int cmd_bench(const CommonOpts& common, const ModelOpts& model, const TrainOpts& train,
              const SamplerOpts& sampler, const std::string& windows_csv, int bench_epochs) {
  const auto full = load_dataset(common);
  const auto features = load_feature_matrix(common);
  std::vector<std::size_t> windows;
  {
    std::istringstream ss(windows_csv);
    std::string item;
    while (std::getline(ss, item, ',')) windows.push_back(std::stoul(item));
  }
  if (windows.empty()) throw ConfigError("--windows needs at least one size");

  std::filesystem::create_directories(common.out_dir);
  const std::string csv_path = common.out_dir + "/bench.csv";
  std::ofstream os(csv_path);
  os << "window,seconds_per_epoch,temporal_attention_flops,total_flops\n";

  for (const std::size_t w : windows) {
    if (w < 1 || w > full.num_steps()) {
      throw ConfigError("window " + std::to_string(w) + " outside 1.." +
                        std::to_string(full.num_steps()));
    }
    // temporal history = the last w snapshots
    SnapshotSequence sub;
    sub.num_nodes = full.num_nodes;
    sub.snapshots.assign(full.snapshots.end() - static_cast<long>(w), full.snapshots.end());

    ModelConfig model_cfg = to_model_config(model);
    TrainConfig train_cfg = to_train_config(train, common);
    train_cfg.max_epochs = bench_epochs;
    train_cfg.selection = "loss";
    const SamplerConfig sampler_cfg = to_sampler_config(sampler, common);
    model_cfg.validate(features.cols);

    const auto t0 = std::chrono::steady_clock::now();
    const auto result = fit<double>(sub, features, model_cfg, train_cfg, sampler_cfg);
    const auto t1 = std::chrono::steady_clock::now();
    const double per_epoch =
        std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(bench_epochs);

    // multiply-accumulate counts of one forward pass at this window
    FlopCounter flops;
    const auto structs = build_edge_structures(sub);
    Tape tape;
    auto params = result.params;
    auto pv = bind_params(tape, params, false);
    ForwardOptions opts;
    opts.flops = &flops;
    model_forward<double>(tape, structs, features.as_tensor(), features.one_hot, pv, model_cfg,
                          opts);

    os << w << ',' << format_value(per_epoch) << ',' << flops.temporal_attention_flops << ','
       << flops.total_flops << '\n';
    std::cout << "window " << w << ": " << per_epoch << " s/epoch, "
              << flops.temporal_attention_flops << " temporal-attention flops\n";
  }
  std::cout << "wrote " << csv_path << "\n";
  return kExitOk;
}

int cmd_export(const CommonOpts& common, const std::string& checkpoint_path) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const auto full = load_dataset(common);
  if (ck.meta.num_nodes != full.num_nodes) {
    throw ConfigError("dimension mismatch: checkpoint num_nodes=" +
                      std::to_string(ck.meta.num_nodes) + " vs dataset num_nodes=" +
                      std::to_string(full.num_nodes));
  }
  const auto features = load_feature_matrix(common);
  if (features.cols != ck.meta.input_dim) {
    throw ConfigError("dimension mismatch: checkpoint input_dim=" +
                      std::to_string(ck.meta.input_dim) + " vs features dim=" +
                      std::to_string(features.cols));
  }
  if (ck.meta.steps > full.num_steps()) {
    throw ConfigError("checkpoint expects " + std::to_string(ck.meta.steps) +
                      " snapshots, dataset has " + std::to_string(full.num_steps()));
  }
  const SnapshotSequence seq = full.prefix(ck.meta.steps);

  std::filesystem::create_directories(common.out_dir);
  const auto structs = build_edge_structures(seq);
  Tape tape;
  auto pv = bind_params(tape, ck.params, false);
  AttentionExport sink;
  ForwardOptions opts;
  opts.export_sink = &sink;
  auto out = model_forward<double>(tape, structs, features.as_tensor(), features.one_hot, pv,
                                   ck.config, opts);
  const auto steps = split_steps(tape.value(out.embeddings), out.steps, out.nodes);
  for (std::size_t t = 0; t < steps.size(); ++t) {
    std::ofstream os(common.out_dir + "/embeddings_t" + std::to_string(t) + ".tsv");
    write_tensor_tsv(os, steps[t]);
  }
  write_structural_attention_csv(sink, common.out_dir + "/attention_structural.csv");
  write_temporal_attention_csv(sink, common.out_dir + "/attention_temporal.csv");
  std::cout << "wrote " << steps.size() << " embedding files and attention CSVs to "
            << common.out_dir << "\n";
  return kExitOk;
}

int cmd_preprocess(const std::string& input, const std::string& output, double window_days,
                   std::size_t num_nodes_hint) {
  if (!std::filesystem::exists(input)) throw ConfigError("input does not exist: " + input);
  std::ifstream is(input);
  std::string line;
  std::size_t line_no = 0;
  struct Interaction {
    NodeId u, v;
    long long epoch;
  };
  std::vector<Interaction> raw;
  long long min_epoch = std::numeric_limits<long long>::max();
  NodeId max_node = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line[0] == '%') continue;
    std::istringstream ls(line);
    long long u, v, epoch;
    if (!(ls >> u >> v >> epoch)) {
      throw ParseError("line " + std::to_string(line_no) + ": expected `u v epoch`");
    }
    if (u < 0 || v < 0) throw ParseError("line " + std::to_string(line_no) + ": negative id");
    if (u == v) continue;  // drop self-interactions
    raw.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v), epoch});
    min_epoch = std::min(min_epoch, epoch);
    max_node = std::max({max_node, static_cast<NodeId>(u), static_cast<NodeId>(v)});
  }
  if (raw.empty()) throw ParseError("no interactions found in " + input);
  const double window_seconds = window_days * 86400.0;
  if (!(window_seconds > 0)) throw ConfigError("--window-days must be positive");

  // weight of a link = number of interactions inside the window
  std::map<std::tuple<long long, NodeId, NodeId>, double> weights;
  for (const auto& r : raw) {
    const long long t =
        static_cast<long long>(static_cast<double>(r.epoch - min_epoch) / window_seconds);
    const NodeId a = std::min(r.u, r.v), b = std::max(r.u, r.v);
    weights[{t, a, b}] += 1.0;
  }
  std::ofstream os(output);
  if (!os) throw ParseError("cannot open for writing: " + output);
  os.precision(17);
  for (const auto& [key, w] : weights) {
    const auto& [t, u, v] = key;
    os << t << ' ' << u << ' ' << v << ' ' << w << '\n';
  }
  const std::size_t inferred = static_cast<std::size_t>(max_node) + 1;
  std::cout << "wrote " << output << " (" << weights.size() << " weighted edges, num_nodes="
            << (num_nodes_hint ? num_nodes_hint : inferred) << ")\n";
  return kExitOk;
}

int cmd_synth(const std::string& output, std::size_t nodes, std::size_t steps,
              std::size_t cross_pairs, double p_intra, std::uint64_t seed,
              std::size_t connectors) {
  SynthConfig cfg;
  cfg.nodes = nodes;
  cfg.steps = steps;
  cfg.cross_pairs = cross_pairs;
  cfg.p_intra = p_intra;
  cfg.seed = seed;
  cfg.connectors = connectors == 0 ? std::min<std::size_t>(10, nodes / 2) : connectors;
  const auto seq = make_periodic_two_community(cfg);
  save_snapshots(seq, output);
  std::cout << "wrote " << output << " (nodes=" << nodes << ", steps=" << steps << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic-graph node embeddings with structural and temporal self-attention"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "key-value config file with dotted keys (train.epochs=...); flags override "
                 "file values");
  app.allow_config_extras(false);

  CommonOpts common;
  ModelOpts model;
  TrainOpts train;
  SamplerOpts sampler;

  auto* train_cmd = app.add_subcommand("train", "fit the model and write a checkpoint");
  add_common(train_cmd, common);
  add_model(train_cmd, model);
  add_train(train_cmd, train);
  add_sampler(train_cmd, sampler);
  train_cmd->add_option("--upto", train.upto, "train on the first N snapshots (0 = all)");
  train_cmd->add_flag("--incremental", train.incremental,
                      "incremental mode: structural block on the newest snapshot only");
  train_cmd->add_option("--store", train.store_dir,
                        "representation store directory (incremental mode)");

  std::string mode_name = "all-links";
  int runs = 10, horizon = 6;
  bool downstream_only = false, keep_val_links = false;
  double classifier_l2 = 1e-4;
  std::string eval_checkpoint;
  auto* eval_cmd = app.add_subcommand("evaluate", "dynamic link-prediction protocol");
  add_common(eval_cmd, common);
  add_model(eval_cmd, model);
  add_train(eval_cmd, train);
  add_sampler(eval_cmd, sampler);
  eval_cmd->add_option("--mode", mode_name, "all-links | new-links | new-nodes | multi-step");
  eval_cmd->add_option("--runs", runs, "randomized repetitions");
  eval_cmd->add_option("--horizon", horizon, "multi-step forecasting depth");
  eval_cmd->add_flag("--downstream-only", downstream_only,
                     "rerandomize only the example split and classifier across runs");
  eval_cmd->add_flag("--keep-val-links", keep_val_links,
                     "leave validation links inside the training snapshots");
  eval_cmd->add_option("--classifier-l2", classifier_l2, "downstream logistic regression L2");
  eval_cmd->add_option("--checkpoint", eval_checkpoint,
                       "score an existing checkpoint instead of retraining");

  std::string windows_csv = "2,4,8";
  int bench_epochs = 2;
  auto* bench_cmd = app.add_subcommand("bench", "epoch timing vs temporal history window");
  add_common(bench_cmd, common);
  add_model(bench_cmd, model);
  add_train(bench_cmd, train);
  add_sampler(bench_cmd, sampler);
  bench_cmd->add_option("--windows", windows_csv, "comma-separated history windows");
  bench_cmd->add_option("--bench-epochs", bench_epochs, "epochs timed per window");

  std::string export_checkpoint;
  auto* export_cmd =
      app.add_subcommand("export", "embeddings TSV + attention-weight CSVs from a checkpoint");
  add_common(export_cmd, common);
  export_cmd->add_option("--checkpoint", export_checkpoint, "checkpoint file")->required();

  std::string pre_input, pre_output;
  double window_days = 60.0;
  std::size_t pre_nodes = 0;
  auto* pre_cmd =
      app.add_subcommand("preprocess", "turn raw `u v epoch` interactions into snapshots");
  pre_cmd->fallthrough();
  pre_cmd->add_option("--input", pre_input, "raw interaction log")->required();
  pre_cmd->add_option("--output", pre_output, "snapshot edge list to write")->required();
  pre_cmd->add_option("--window-days", window_days, "snapshot window length in days");
  pre_cmd->add_option("--num-nodes", pre_nodes, "node count override for the report line");

  std::string synth_out = "synthetic.txt";
  std::size_t synth_nodes = 60, synth_steps = 8, synth_cross = 60, synth_connectors = 0;
  double synth_p = 0.10;
  std::uint64_t synth_seed = 7;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a periodic two-community benchmark dataset");
  synth_cmd->fallthrough();
  synth_cmd->add_option("--out", synth_out, "edge-list file to write");
  synth_cmd->add_option("--nodes", synth_nodes, "node count (even)");
  synth_cmd->add_option("--steps", synth_steps, "snapshot count");
  synth_cmd->add_option("--cross-pairs", synth_cross, "recurring inter-community links");
  synth_cmd->add_option("--p-intra", synth_p, "intra-community edge density");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--connectors", synth_connectors,
                        "cross-linkable nodes per community (0 = auto)");

  // incremental runs default to the higher regularization that mode needs
  train_cmd->callback([&]() {
    if (train.incremental) {
      if (train_cmd->count("--structural-dropout") == 0) model.structural_dropout = 0.4;
      if (train_cmd->count("--temporal-dropout") == 0) model.temporal_dropout = 0.4;
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(train_cmd)) return cmd_train(common, model, train, sampler);
    if (app.got_subcommand(eval_cmd)) {
      return cmd_evaluate(common, model, train, sampler, mode_name, runs, horizon,
                          downstream_only, keep_val_links, classifier_l2, eval_checkpoint);
    }
    if (app.got_subcommand(bench_cmd)) {
      return cmd_bench(common, model, train, sampler, windows_csv, bench_epochs);
    }
    if (app.got_subcommand(export_cmd)) return cmd_export(common, export_checkpoint);
    if (app.got_subcommand(pre_cmd)) {
      return cmd_preprocess(pre_input, pre_output, window_days, pre_nodes);
    }
    if (app.got_subcommand(synth_cmd)) {
      return cmd_synth(synth_out, synth_nodes, synth_steps, synth_cross, synth_p,
                       synth_seed, synth_connectors);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
