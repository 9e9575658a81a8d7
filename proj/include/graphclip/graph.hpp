#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "graphclip/matrix.hpp"

namespace graphclip {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;  // stored with first < second

// Text-attributed graph: undirected, no self-loops, edges sorted and unique.
class TextAttributedGraph {
 public:
  TextAttributedGraph() = default;
  // Normalizes edges (orients, dedups, drops self-loops) and validates ids.
  TextAttributedGraph(std::size_t num_nodes, std::vector<Edge> edges, std::vector<std::string> raw_text,
                      std::vector<std::optional<int>> labels = {}, std::vector<std::string> class_names = {});

  std::size_t num_nodes() const noexcept { return raw_text_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::string>& raw_text() const noexcept { return raw_text_; }
  const std::vector<NodeId>& neighbors(NodeId v) const { return adjacency_.at(v); }
  bool has_edge(NodeId u, NodeId v) const;

  bool has_features() const noexcept { return !features_.empty(); }
  const Matrix& features() const noexcept { return features_; }
  void set_features(Matrix features);

  bool has_labels() const noexcept { return !labels_.empty(); }
  const std::vector<std::optional<int>>& labels() const noexcept { return labels_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  void set_class_names(std::vector<std::string> names) { class_names_ = std::move(names); }
  std::size_t num_classes() const;

 private:
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> adjacency_;
  std::vector<std::string> raw_text_;
  Matrix features_;
  std::vector<std::optional<int>> labels_;
  std::vector<std::string> class_names_;
};

// Edge-list-with-text format:
//   <num_nodes>
//   <id>\t<label-or-dash>\t<raw text>      (num_nodes lines, ids 0..N-1 in any order)
//   <u>\t<v>                               (remaining lines)
// Blank lines are skipped. Lines starting with '#' are comments, except
// "#classes\t<name0>\t<name1>..." which declares class names.
TextAttributedGraph load_graph(const std::filesystem::path& path);
TextAttributedGraph parse_graph(std::istream& in);
void save_graph(const TextAttributedGraph& g, const std::filesystem::path& path);

struct SamplerConfig {
  double restart_prob = 0.5;
  std::size_t node_budget = 16;
  std::size_t max_steps = 256;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct EgoSubgraph {
  std::size_t center_local_id = 0;
  std::vector<NodeId> global_ids;
  Matrix features;                                        // n × d_text
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // local ids, first < second, sorted
  Matrix positional;                                      // n × K

  std::size_t size() const noexcept { return global_ids.size(); }
  // Row-normalized adjacency D⁻¹A; isolated nodes get zero rows.
  Matrix mean_adjacency() const;
  void validate() const;
};

// SplitMix64 step, used to derive independent RNG streams from a seed.
std::uint64_t mix_seed(std::uint64_t x);

// Uniform double in [0,1) from a 64-bit engine, independent of the standard
// library's distribution implementation.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// One random walk with restart anchored at `seed`: each step teleports back
// with probability restart_prob, otherwise moves to a uniform neighbor.
// Nodes without neighbors always teleport.
class RwrWalker {
 public:
  RwrWalker(const TextAttributedGraph& graph, NodeId seed, double restart_prob, std::uint64_t rng_seed,
            std::optional<Edge> masked_edge = std::nullopt);
  NodeId step();
  NodeId position() const noexcept { return current_; }

 private:
  const TextAttributedGraph& graph_;
  NodeId seed_;
  NodeId current_;
  double restart_prob_;
  std::optional<Edge> masked_;
  std::mt19937_64 rng_;
};

// Samples the ego-subgraph of `seed`: walk until node_budget distinct nodes
// are visited or max_steps are taken, then take the induced subgraph. The
// local order is first-visit order, so the seed is local node 0. Features are
// copied from the graph when present. `masked_edge` is treated as absent.
EgoSubgraph rwr_sample(const TextAttributedGraph& graph, NodeId seed, const SamplerConfig& cfg,
                       std::optional<Edge> masked_edge = std::nullopt);

// Random-walk positional encoding: entry (v, k-1) = [(D⁻¹A)ᵏ]_vv, k = 1..K.
Matrix rwpe(const EgoSubgraph& sub, std::size_t k);

// Samples the subgraph, attaches features and an RWPE of width k.
EgoSubgraph make_ego_subgraph(const TextAttributedGraph& graph, NodeId seed, const SamplerConfig& cfg,
                              std::size_t pe_dim, std::optional<Edge> masked_edge = std::nullopt);

}  // namespace graphclip
