#include "graphclip/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace graphclip {

namespace {

std::vector<std::string> split_tabs(const std::string& line, std::size_t max_fields) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (out.size() + 1 < max_fields) {
    const auto tab = line.find('\t', start);
    if (tab == std::string::npos) break;
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  out.push_back(line.substr(start));
  return out;
}

template <typename T>
bool parse_int(const std::string& s, T& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace

TextAttributedGraph::TextAttributedGraph(std::size_t num_nodes, std::vector<Edge> edges,
                                         std::vector<std::string> raw_text,
                                         std::vector<std::optional<int>> labels,
                                         std::vector<std::string> class_names)
    : raw_text_(std::move(raw_text)), labels_(std::move(labels)), class_names_(std::move(class_names)) {
  if (raw_text_.size() != num_nodes)
    throw ValidationError("raw text count " + std::to_string(raw_text_.size()) + " != num_nodes " +
                          std::to_string(num_nodes));
  if (!labels_.empty() && labels_.size() != num_nodes)
    throw ValidationError("label count does not match num_nodes");
  for (auto& [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes)
      throw ValidationError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") references a node outside 0.." + std::to_string(num_nodes - 1));
    if (u > v) std::swap(u, v);
  }
  std::erase_if(edges, [](const Edge& e) { return e.first == e.second; });
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);
  adjacency_.assign(num_nodes, {});
  for (auto [u, v] : edges_) {
    adjacency_[u].push_back(v);
    adjacency_[v].push_back(u);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
}

bool TextAttributedGraph::has_edge(NodeId u, NodeId v) const {
  if (u > v) std::swap(u, v);
  return std::binary_search(edges_.begin(), edges_.end(), Edge{u, v});
}

void TextAttributedGraph::set_features(Matrix features) {
  if (features.rows() != num_nodes())
    throw ValidationError("feature rows " + std::to_string(features.rows()) + " != num_nodes " +
                          std::to_string(num_nodes()));
  features_ = std::move(features);
}

std::size_t TextAttributedGraph::num_classes() const {
  std::size_t n = class_names_.size();
  for (const auto& l : labels_)
    if (l) n = std::max(n, static_cast<std::size_t>(*l) + 1);
  return n;
}

TextAttributedGraph parse_graph(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> class_names;

  auto next_content = [&](std::string& out) -> bool {
    while (std::getline(in, out)) {
      ++lineno;
      strip_cr(out);
      if (out.empty()) continue;
      if (out[0] == '#') {
        if (out.rfind("#classes\t", 0) == 0) {
          auto fields = split_tabs(out, static_cast<std::size_t>(-1));
          class_names.assign(fields.begin() + 1, fields.end());
        }
        continue;
      }
      return true;
    }
    return false;
  };

  if (!next_content(line)) throw ParseError("missing node-count header", lineno + 1);
  std::size_t n = 0;
  if (!parse_int(line, n)) throw ParseError("node-count header is not an integer: '" + line + "'", lineno);

  std::vector<std::string> text(n);
  std::vector<std::optional<int>> labels(n);
  std::vector<bool> seen(n, false);
  bool any_label = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!next_content(line)) throw ParseError("expected " + std::to_string(n) + " node lines", lineno + 1);
    auto f = split_tabs(line, 3);
    if (f.size() != 3) throw ParseError("node line needs id<TAB>label<TAB>text", lineno);
    std::size_t id = 0;
    if (!parse_int(f[0], id)) throw ParseError("bad node id '" + f[0] + "'", lineno);
    if (id >= n) throw ValidationError("line " + std::to_string(lineno) + ": node id " + std::to_string(id) +
                                       " outside 0.." + std::to_string(n - 1));
    if (seen[id]) throw ValidationError("line " + std::to_string(lineno) + ": duplicate node id " +
                                        std::to_string(id));
    seen[id] = true;
    if (f[1] != "-") {
      int label = 0;
      if (!parse_int(f[1], label) || label < 0) throw ParseError("bad label '" + f[1] + "'", lineno);
      labels[id] = label;
      any_label = true;
    }
    text[id] = f[2];
  }

  std::vector<Edge> edges;
  while (next_content(line)) {
    auto f = split_tabs(line, 3);
    if (f.size() != 2) throw ParseError("edge line needs u<TAB>v", lineno);
    NodeId u = 0, v = 0;
    if (!parse_int(f[0], u) || !parse_int(f[1], v)) throw ParseError("bad edge '" + line + "'", lineno);
    if (u >= n || v >= n)
      throw ValidationError("line " + std::to_string(lineno) + ": edge references node " +
                            std::to_string(std::max(u, v)) + " of a " + std::to_string(n) + "-node graph");
    edges.emplace_back(u, v);
  }
  if (!any_label) labels.clear();
  return TextAttributedGraph(n, std::move(edges), std::move(text), std::move(labels), std::move(class_names));
}

TextAttributedGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open graph file " + path.string());
  return parse_graph(in);
}

void save_graph(const TextAttributedGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write graph file " + path.string());
  if (!g.class_names().empty()) {
    out << "#classes";
    for (const auto& c : g.class_names()) out << '\t' << c;
    out << '\n';
  }
  out << g.num_nodes() << '\n';
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    out << i << '\t';
    if (g.has_labels() && g.labels()[i]) out << *g.labels()[i];
    else out << '-';
    out << '\t' << g.raw_text()[i] << '\n';
  }
  for (auto [u, v] : g.edges()) out << u << '\t' << v << '\n';
}

void SamplerConfig::validate() const {
  if (!(restart_prob > 0.0 && restart_prob < 1.0))
    throw ValidationError("sampler restart_prob must lie in (0,1)");
  if (node_budget < 1) throw ValidationError("sampler node_budget must be >= 1");
  if (max_steps < node_budget) throw ValidationError("sampler max_steps must be >= node_budget");
}

Matrix EgoSubgraph::mean_adjacency() const {
  const std::size_t n = size();
  Matrix a(n, n);
  std::vector<double> deg(n, 0.0);
  for (auto [u, v] : edges) {
    deg[u] += 1.0;
    deg[v] += 1.0;
  }
  for (auto [u, v] : edges) {
    a(u, v) = 1.0 / deg[u];
    a(v, u) = 1.0 / deg[v];
  }
  return a;
}

void EgoSubgraph::validate() const {
  const std::size_t n = size();
  if (n == 0) throw ValidationError("empty subgraph");
  if (center_local_id >= n) throw ValidationError("center_local_id out of range");
  auto ids = global_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ValidationError("subgraph global ids are not unique");
  if (!positional.empty() && positional.rows() != n)
    throw ValidationError("positional rows do not match subgraph size");
  if (!features.empty() && features.rows() != n)
    throw ValidationError("feature rows do not match subgraph size");
  for (auto [u, v] : edges)
    if (u >= n || v >= n || u >= v) throw ValidationError("bad local edge");
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RwrWalker::RwrWalker(const TextAttributedGraph& graph, NodeId seed, double restart_prob,
                     std::uint64_t rng_seed, std::optional<Edge> masked_edge)
    : graph_(graph), seed_(seed), current_(seed), restart_prob_(restart_prob), rng_(rng_seed) {
  if (seed >= graph.num_nodes())
    throw ValidationError("seed node " + std::to_string(seed) + " outside graph of " +
                          std::to_string(graph.num_nodes()) + " nodes");
  if (masked_edge) {
    auto [u, v] = *masked_edge;
    masked_ = Edge{std::min(u, v), std::max(u, v)};
  }
}

NodeId RwrWalker::step() {
  const auto& nb = graph_.neighbors(current_);
  std::size_t usable = nb.size();
  NodeId blocked = current_;
  if (masked_ && (current_ == masked_->first || current_ == masked_->second)) {
    blocked = current_ == masked_->first ? masked_->second : masked_->first;
    if (std::binary_search(nb.begin(), nb.end(), blocked)) --usable;
  }
  if (usable == 0 || uniform01(rng_) < restart_prob_) {
    current_ = seed_;
    return current_;
  }
  // Pick uniformly among usable neighbors, skipping the masked endpoint.
  std::size_t pick = static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(usable));
  if (pick >= usable) pick = usable - 1;
  for (NodeId w : nb) {
    if (w == blocked) continue;
    if (pick-- == 0) {
      current_ = w;
      break;
    }
  }
  return current_;
}

EgoSubgraph rwr_sample(const TextAttributedGraph& graph, NodeId seed, const SamplerConfig& cfg,
                       std::optional<Edge> masked_edge) {
  cfg.validate();
  if (graph.num_nodes() == 0) throw ValidationError("cannot sample from an empty graph");
  RwrWalker walker(graph, seed, cfg.restart_prob, mix_seed(cfg.rng_seed ^ mix_seed(seed)), masked_edge);

  std::vector<NodeId> order{seed};
  std::unordered_map<NodeId, std::size_t> local{{seed, 0}};
  for (std::size_t s = 0; s < cfg.max_steps && order.size() < cfg.node_budget; ++s) {
    const NodeId v = walker.step();
    if (local.emplace(v, order.size()).second) order.push_back(v);
  }

  EgoSubgraph sub;
  sub.center_local_id = 0;
  sub.global_ids = order;
  Edge masked{0, 0};
  if (masked_edge) masked = {std::min(masked_edge->first, masked_edge->second),
                             std::max(masked_edge->first, masked_edge->second)};
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (NodeId w : graph.neighbors(order[i])) {
      auto it = local.find(w);
      if (it == local.end() || it->second <= i) continue;
      const Edge ge{std::min(order[i], w), std::max(order[i], w)};
      if (masked_edge && ge == masked) continue;
      sub.edges.emplace_back(i, it->second);
    }
  }
  std::sort(sub.edges.begin(), sub.edges.end());
  if (graph.has_features()) {
    const Matrix& f = graph.features();
    sub.features = Matrix(order.size(), f.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto src = f.row_span(order[i]);
      std::copy(src.begin(), src.end(), sub.features.row_span(i).begin());
    }
  }
  return sub;
}

Matrix rwpe(const EgoSubgraph& sub, std::size_t k) {
  if (k < 1) throw ValidationError("RWPE width must be >= 1");
  const std::size_t n = sub.size();
  const Matrix walk = sub.mean_adjacency();
  Matrix pe(n, k);
  Matrix power = walk;
  for (std::size_t step = 0; step < k; ++step) {
    for (std::size_t v = 0; v < n; ++v) pe(v, step) = power(v, v);
    if (step + 1 < k) {
      Matrix next(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < n; ++p) {
          const double a = power(i, p);
          if (a == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) next(i, j) += a * walk(p, j);
        }
      power = std::move(next);
    }
  }
  return pe;
}

EgoSubgraph make_ego_subgraph(const TextAttributedGraph& graph, NodeId seed, const SamplerConfig& cfg,
                              std::size_t pe_dim, std::optional<Edge> masked_edge) {
  if (!graph.has_features()) throw ValidationError("graph has no node features attached");
  EgoSubgraph sub = rwr_sample(graph, seed, cfg, masked_edge);
  sub.positional = rwpe(sub, pe_dim);
  return sub;
}

}  // namespace graphclip
