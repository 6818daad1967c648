#include "dysat/layers.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "dysat/tensor_io.hpp"

namespace dysat {

namespace {

std::vector<LayerSpec> parse_layer_list(const std::string& s) {
  std::vector<LayerSpec> layers;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("layer spec must be `heads:dim`");
    LayerSpec spec;
    spec.heads = std::stoul(item.substr(0, colon));
    spec.dim = std::stoul(item.substr(colon + 1));
    layers.push_back(spec);
  }
  return layers;
}

std::string layer_list_str(const std::vector<LayerSpec>& layers) {
  std::string s;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(layers[i].heads) + ":" + std::to_string(layers[i].dim);
  }
  return s;
}

}  // namespace

void ModelConfig::validate(std::size_t input_dim) const {
  if (input_dim == 0) throw ConfigError("input dimension must be positive");
  if (final_dim == 0) throw ConfigError("final_dim must be positive");
  if (!ablate_structural) {
    if (structural_layers.empty()) throw ConfigError("at least one structural layer required");
    for (const auto& l : structural_layers) {
      if (l.heads == 0 || l.dim == 0) throw ConfigError("structural layer heads/dim must be > 0");
    }
  }
  if (!ablate_temporal) {
    if (temporal_layers.empty()) throw ConfigError("at least one temporal layer required");
    for (const auto& l : temporal_layers) {
      if (l.heads == 0 || l.dim == 0) throw ConfigError("temporal layer heads/dim must be > 0");
    }
  }
  if (ablate_structural && ablate_temporal) {
    throw ConfigError("cannot ablate both attention blocks");
  }
  for (double p : {structural_dropout, temporal_dropout}) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rates must lie in [0, 1)");
  }
  if (leaky_relu_slope <= 0.0) throw ConfigError("leaky_relu_slope must be positive");
}

std::size_t ModelConfig::structural_out_dim() const {
  if (structural_layers.empty()) return 0;
  const LayerSpec& last = structural_layers.back();
  return last.heads * last.dim;
}

std::size_t ModelConfig::temporal_in_dim(std::size_t input_dim) const {
  return ablate_structural ? input_dim : structural_out_dim();
}

std::size_t ModelConfig::temporal_out_dim(std::size_t input_dim) const {
  if (ablate_temporal) return temporal_in_dim(input_dim);
  const LayerSpec& last = temporal_layers.back();
  return last.heads * last.dim;
}

std::size_t ModelConfig::ff_in_dim(std::size_t input_dim) const {
  return temporal_out_dim(input_dim);
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "structural_layers " << layer_list_str(structural_layers) << '\n';
  os << "temporal_layers " << layer_list_str(temporal_layers) << '\n';
  os << "final_dim " << final_dim << '\n';
  os << "window " << window << '\n';
  os << "structural_dropout " << structural_dropout << '\n';
  os << "temporal_dropout " << temporal_dropout << '\n';
  os << "leaky_relu_slope " << leaky_relu_slope << '\n';
  os << "ablate_structural " << (ablate_structural ? 1 : 0) << '\n';
  os << "ablate_temporal " << (ablate_temporal ? 1 : 0) << '\n';
  return os.str();
}

ModelConfig ModelConfig::deserialize_fields(
    const std::vector<std::pair<std::string, std::string>>& fields) {
  ModelConfig cfg;
  for (const auto& [key, value] : fields) {
    if (key == "structural_layers") {
      cfg.structural_layers = parse_layer_list(value);
    } else if (key == "temporal_layers") {
      cfg.temporal_layers = parse_layer_list(value);
    } else if (key == "final_dim") {
      cfg.final_dim = std::stoul(value);
    } else if (key == "window") {
      cfg.window = std::stoul(value);
    } else if (key == "structural_dropout") {
      cfg.structural_dropout = std::stod(value);
    } else if (key == "temporal_dropout") {
      cfg.temporal_dropout = std::stod(value);
    } else if (key == "leaky_relu_slope") {
      cfg.leaky_relu_slope = std::stod(value);
    } else if (key == "ablate_structural") {
      cfg.ablate_structural = value == "1";
    } else if (key == "ablate_temporal") {
      cfg.ablate_temporal = value == "1";
    }
  }
  return cfg;
}

EdgeStructure build_edge_structure(const Snapshot& s) {
  EdgeStructure es;
  const std::size_t n = s.num_nodes();
  es.offsets.resize(n + 1, 0);
  std::size_t entries = n;  // one self entry per node
  for (NodeId v = 0; v < n; ++v) entries += s.degree(v);
  es.src.reserve(entries);
  es.dst.reserve(entries);
  es.weight.reserve(entries);
  for (NodeId v = 0; v < n; ++v) {
    es.offsets[v] = es.src.size();
    for (const auto& [u, w] : s.neighbors(v)) {
      es.src.push_back(u);
      es.dst.push_back(v);
      es.weight.push_back(w);
    }
    es.src.push_back(v);
    es.dst.push_back(v);
    es.weight.push_back(1.0);
  }
  es.offsets[n] = es.src.size();
  return es;
}

std::vector<EdgeStructure> build_edge_structures(const SnapshotSequence& seq) {
  std::vector<EdgeStructure> out;
  out.reserve(seq.num_steps());
  for (const auto& s : seq.snapshots) out.push_back(build_edge_structure(s));
  return out;
}

// ---- checkpoints ------------------------------------------------------------

namespace {
constexpr const char* kCheckpointMagic = "DYSATCK1";
}

void save_checkpoint(const std::string& path, const ModelParams& params, const ModelConfig& cfg,
                     const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open for writing: " + path);
  os << kCheckpointMagic << '\n';
  os << cfg.serialize();
  os << "num_nodes " << meta.num_nodes << '\n';
  os << "input_dim " << meta.input_dim << '\n';
  os << "steps " << meta.steps << '\n';
  os << '\n';
  auto refs = collect_params(const_cast<ModelParams&>(params));
  detail::put_u64(os, refs.size());
  for (const auto& ref : refs) {
    detail::put_u64(os, ref.name.size());
    os.write(ref.name.data(), static_cast<std::streamsize>(ref.name.size()));
    write_tensor(os, *ref.tensor);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic) {
    throw ParseError("not a checkpoint file: " + path);
  }
  std::vector<std::pair<std::string, std::string>> fields;
  CheckpointMeta meta;
  while (std::getline(is, line) && !line.empty()) {
    const auto space = line.find(' ');
    if (space == std::string::npos) throw ParseError("malformed checkpoint header line");
    const std::string key = line.substr(0, space);
    const std::string value = line.substr(space + 1);
    if (key == "num_nodes") {
      meta.num_nodes = std::stoul(value);
    } else if (key == "input_dim") {
      meta.input_dim = std::stoul(value);
    } else if (key == "steps") {
      meta.steps = std::stoul(value);
    } else {
      fields.emplace_back(key, value);
    }
  }
  Checkpoint ck;
  ck.config = ModelConfig::deserialize_fields(fields);
  ck.meta = meta;
  ck.params = init_params<double>(ck.config, meta.input_dim, meta.steps, 0);
  auto refs = collect_params(ck.params);
  const std::size_t count = detail::get_u64(is);
  if (count != refs.size()) {
    throw ParseError("checkpoint parameter count mismatch: file has " + std::to_string(count) +
                     ", config expects " + std::to_string(refs.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t name_len = detail::get_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!is || name != refs[i].name) {
      throw ParseError("checkpoint tensor name mismatch at index " + std::to_string(i));
    }
    Tensor t = read_tensor<double>(is);
    if (t.shape() != refs[i].tensor->shape()) {
      throw ParseError("checkpoint tensor " + name + " has shape " + t.shape_str() +
                       ", config expects " + refs[i].tensor->shape_str());
    }
    *refs[i].tensor = std::move(t);
  }
  return ck;
}

AttentionExport export_attention_weights(const SnapshotSequence& seq, const FeatureMatrix& x,
                                         const ModelParams& params, const ModelConfig& cfg) {
  const auto structs = build_edge_structures(seq);
  AttentionExport sink;
  Tape tape;
  auto pv = bind_params(tape, params, false);
  ForwardOptions opts;
  opts.export_sink = &sink;
  model_forward(tape, structs, x.as_tensor(), x.one_hot, pv, cfg, opts);
  return sink;
}

void write_structural_attention_csv(const AttentionExport& exp, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path);
  os << "layer,head,snapshot,u,v,alpha\n";
  for (const auto& row : exp.structural) {
    os << row.layer << ',' << row.head << ',' << row.snapshot << ',' << row.u << ',' << row.v
       << ',' << format_value(row.alpha) << '\n';
  }
}

void write_temporal_attention_csv(const AttentionExport& exp, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path);
  os << "layer,head,node,i,j,beta\n";
  for (const auto& row : exp.temporal) {
    os << row.layer << ',' << row.head << ',' << row.node << ',' << row.i << ',' << row.j << ','
       << format_value(row.beta) << '\n';
  }
}

}  // namespace dysat
