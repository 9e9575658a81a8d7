#include "graphclip/graph_encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"

namespace graphclip {

std::string to_string(ScalePreset p) {
  switch (p) {
    case ScalePreset::Small: return "small";
    case ScalePreset::Medium: return "medium";
    case ScalePreset::Base: return "base";
    case ScalePreset::Large: return "large";
    case ScalePreset::Custom: break;
  }
  return "custom";
}

ScalePreset preset_from_string(const std::string& name) {
  if (name == "small") return ScalePreset::Small;
  if (name == "medium") return ScalePreset::Medium;
  if (name == "base") return ScalePreset::Base;
  if (name == "large") return ScalePreset::Large;
  if (name == "custom") return ScalePreset::Custom;
  throw ValidationError("unknown encoder preset '" + name + "' (small|medium|base|large|custom)");
}

GraphEncoderConfig GraphEncoderConfig::from_preset(ScalePreset p) {
  GraphEncoderConfig c;
  c.preset = p;
  c.text_dim = 384;
  c.pe_dim = 16;
  switch (p) {
    case ScalePreset::Small: c.layers = 4; c.hidden = 512; c.heads = 8; break;
    case ScalePreset::Medium: c.layers = 8; c.hidden = 768; c.heads = 12; break;
    case ScalePreset::Base: c.layers = 12; c.hidden = 1024; c.heads = 16; break;
    case ScalePreset::Large: c.layers = 16; c.hidden = 1024; c.heads = 16; break;
    case ScalePreset::Custom: return GraphEncoderConfig{};
  }
  return c;
}

void GraphEncoderConfig::validate() const {
  if (layers == 0 || hidden == 0 || heads == 0 || pe_dim == 0 || text_dim == 0 || ffn_mult == 0)
    throw ValidationError("encoder sizes must be positive");
  if (hidden % heads != 0)
    throw ValidationError("hidden size " + std::to_string(hidden) + " not divisible by " +
                          std::to_string(heads) + " heads");
}

std::vector<TensorShape> parameter_shapes(const GraphEncoderConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.hidden, f = cfg.ffn_mult * cfg.hidden;
  std::vector<TensorShape> s;
  auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    s.push_back({name + ".weight", in, out});
    s.push_back({name + ".bias", 1, out});
  };
  linear("input", cfg.text_dim + cfg.pe_dim, d);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    linear(p + "local.fc1", d, d);
    linear(p + "local.fc2", d, d);
    linear(p + "attn.query", d, d);
    linear(p + "attn.key", d, d);
    linear(p + "attn.value", d, d);
    linear(p + "attn.out", d, d);
    s.push_back({p + "norm1.gamma", 1, d});
    s.push_back({p + "norm1.beta", 1, d});
    linear(p + "ffn.fc1", d, f);
    linear(p + "ffn.fc2", f, d);
    s.push_back({p + "norm2.gamma", 1, d});
    s.push_back({p + "norm2.beta", 1, d});
  }
  linear("projector", d, cfg.text_dim);
  return s;
}

std::size_t parameter_count(const GraphEncoderConfig& cfg) {
  std::size_t n = 0;
  for (const auto& t : parameter_shapes(cfg)) n += t.rows * t.cols;
  return n;
}

std::size_t TextTowerShape::parameter_count() const {
  const std::size_t h = hidden;
  std::size_t n = (vocab + max_positions + token_types) * h + 2 * h;  // embeddings + LayerNorm
  const std::size_t attn = 4 * (h * h + h) + 2 * h;
  const std::size_t ffn = h * intermediate + intermediate + intermediate * h + h + 2 * h;
  n += layers * (attn + ffn);
  if (pooler) n += h * h + h;
  return n;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::uint64_t hash_bytes(const void* p, std::size_t n, std::uint64_t h) {
  return fnv1a64(std::string_view(static_cast<const char*>(p), n), h);
}

nlohmann::json config_to_json(const GraphEncoderConfig& c) {
  return {{"layers", c.layers},   {"hidden", c.hidden},     {"heads", c.heads},
          {"pe_dim", c.pe_dim},   {"text_dim", c.text_dim}, {"ffn_mult", c.ffn_mult},
          {"preset", to_string(c.preset)}, {"init_seed", c.init_seed}};
}

GraphEncoderConfig config_from_json(const nlohmann::json& j) {
  GraphEncoderConfig c;
  c.layers = j.at("layers");
  c.hidden = j.at("hidden");
  c.heads = j.at("heads");
  c.pe_dim = j.at("pe_dim");
  c.text_dim = j.at("text_dim");
  c.ffn_mult = j.at("ffn_mult");
  c.preset = preset_from_string(j.at("preset"));
  c.init_seed = j.at("init_seed");
  return c;
}

constexpr char kMagic[8] = {'G', 'C', 'L', 'I', 'P', 'C', 'K', 'P'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("truncated checkpoint");
  return v;
}

}  // namespace

ParamStore::ParamStore(const GraphEncoderConfig& cfg) : cfg_(cfg) {
  std::mt19937_64 rng(cfg.init_seed);
  for (const auto& s : parameter_shapes(cfg)) {
    Tensor t{s.name, Matrix(s.rows, s.cols), Matrix(s.rows, s.cols)};
    if (ends_with(s.name, ".weight")) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.rows));
      for (double& v : t.value.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
    } else if (ends_with(s.name, ".gamma")) {
      t.value.fill(1.0);
    }
    tensors_.push_back(std::move(t));
  }
}

Tensor& ParamStore::at(const std::string& name) {
  for (auto& t : tensors_)
    if (t.name == name) return t;
  throw ValidationError("no parameter tensor named '" + name + "'");
}

const Tensor& ParamStore::at(const std::string& name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.grad.fill(0.0);
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors_) {
    h = fnv1a64(t.name, h);
    h = hash_bytes(t.value.data(), t.value.size() * sizeof(double), h);
  }
  return h;
}

void ParamStore::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  nlohmann::json header = {{"config", config_to_json(cfg_)}, {"metadata", metadata_}};
  const std::string hs = header.dump();
  out.write(kMagic, sizeof kMagic);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  write_pod<std::uint64_t>(out, tensors_.size());
  for (const auto& t : tensors_) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod<std::uint64_t>(out, t.value.rows());
    write_pod<std::uint64_t>(out, t.value.cols());
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  if (!out) throw ValidationError("failed writing checkpoint " + path.string());
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ParseError("not a graph encoder checkpoint: " + path.string());
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw ValidationError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto hlen = read_pod<std::uint64_t>(in);
  std::string hs(hlen, '\0');
  if (!in.read(hs.data(), static_cast<std::streamsize>(hlen))) throw ParseError("truncated checkpoint header");
  ParamStore store;
  try {
    const auto header = nlohmann::json::parse(hs);
    store.cfg_ = config_from_json(header.at("config"));
    store.metadata_ = header.at("metadata").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto expected = parameter_shapes(store.cfg_);
  const auto count = read_pod<std::uint64_t>(in);
  if (count != expected.size()) throw ValidationError("checkpoint tensor count does not match its config");
  for (const auto& shape : expected) {
    const auto nlen = read_pod<std::uint32_t>(in);
    std::string name(nlen, '\0');
    if (!in.read(name.data(), nlen)) throw ParseError("truncated checkpoint tensor name");
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    if (name != shape.name || rows != shape.rows || cols != shape.cols)
      throw ValidationError("checkpoint tensor '" + name + "' does not match expected '" + shape.name + "'");
    Tensor t{name, Matrix(rows, cols), Matrix(rows, cols)};
    if (!in.read(reinterpret_cast<char*>(t.value.data()),
                 static_cast<std::streamsize>(t.value.size() * sizeof(double))))
      throw ParseError("truncated checkpoint tensor data");
    store.tensors_.push_back(std::move(t));
  }
  return store;
}

GraphForward forward_graph(const ParamStore& params, const EgoSubgraph& sub, const Matrix* shift,
                           ForwardOptions opts) {
  const GraphEncoderConfig& cfg = params.config();
  const std::size_t n = sub.size();
  if (n == 0) throw ShapeError("cannot encode an empty subgraph");
  require_shape(sub.features, n, cfg.text_dim, "subgraph features");
  require_shape(sub.positional, n, cfg.pe_dim, "subgraph positional encoding");

  GraphForward fwd;
  ad::Tape& t = fwd.tape;
  const auto& ts = params.tensors();
  std::size_t next = 0;
  auto p = [&]() {
    const ad::Var v = t.param(ts[next].value, opts.param_grads);
    fwd.param_vars.emplace_back(next, v);
    ++next;
    return v;
  };
  auto linear = [&](ad::Var x) {
    const ad::Var w = p();
    const ad::Var b = p();
    return t.add_row(t.matmul(x, w), b);
  };

  Matrix x = sub.features;
  if (shift) {
    require_shape(*shift, n, cfg.text_dim, "feature shift");
    x += *shift;
  }
  fwd.input = t.leaf(std::move(x), opts.input_grad);
  const ad::Var pos = t.constant(sub.positional);
  const ad::Var in_parts[] = {fwd.input, pos};
  ad::Var z = linear(t.concat_cols(in_parts));

  const Matrix walk = sub.mean_adjacency();
  const std::size_t head_dim = cfg.hidden / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    // Local branch: MLP over the degree-normalized neighbor mean.
    const ad::Var agg = t.matmul_const_left(walk, z);
    const ad::Var local = linear(t.gelu(linear(agg)));

    // Global branch: multi-head self-attention over all subgraph nodes.
    const ad::Var q = linear(z);
    const ad::Var k = linear(z);
    const ad::Var v = linear(z);
    std::vector<ad::Var> heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const ad::Var qh = t.slice_cols(q, h * head_dim, head_dim);
      const ad::Var kh = t.slice_cols(k, h * head_dim, head_dim);
      const ad::Var vh = t.slice_cols(v, h * head_dim, head_dim);
      const ad::Var attn = t.softmax_rows(t.scale(t.matmul_nt(qh, kh), inv_sqrt));
      heads.push_back(t.matmul(attn, vh));
    }
    const ad::Var global = linear(t.concat_cols(heads));

    const ad::Var g1 = p();
    const ad::Var b1 = p();
    const ad::Var y = t.layer_norm(t.add(t.add(z, local), global), g1, b1);
    const ad::Var ffn = linear(t.gelu(linear(y)));
    const ad::Var g2 = p();
    const ad::Var b2 = p();
    z = t.layer_norm(t.add(y, ffn), g2, b2);
  }
  fwd.output = t.l2_normalize_rows(linear(t.mean_rows(z)));
  return fwd;
}

Matrix backward_graph(GraphForward& fwd, const Matrix& output_grad, std::vector<Matrix>* param_grads) {
  fwd.tape.backward(fwd.output, output_grad);
  if (param_grads) {
    for (const auto& [idx, var] : fwd.param_vars) {
      if (!fwd.tape.requires_grad(var)) continue;
      (*param_grads)[idx] += fwd.tape.grad(var);
    }
  }
  return fwd.tape.grad(fwd.input);
}

Embedding encode_graph(const ParamStore& params, const EgoSubgraph& sub, const Matrix* shift) {
  GraphForward fwd = forward_graph(params, sub, shift, {.param_grads = false, .input_grad = false});
  const Matrix& out = fwd.tape.value(fwd.output);
  return {out.values(), true};
}

}  // namespace graphclip
