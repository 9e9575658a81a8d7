#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphclip/graph.hpp"

namespace graphclip {

enum class Domain { Academic, ECommerce, Social };

std::string to_string(Domain d);
Domain domain_from_string(std::string_view s);

// Key declarations of the markup dialect. Node attribute keys come first and
// the edge key follows them.
struct GraphMLSchema {
  std::vector<std::pair<std::string, std::string>> node_attr_keys;  // (key id, attr name)
  std::pair<std::string, std::string> edge_attr_key{"d2", "type"};
  std::string relation_word = "cited";

  void validate() const;

  static GraphMLSchema for_domain(Domain d);
};

// node_texts[v][k] is the value of attribute k for local node v.
using NodeTexts = std::vector<std::vector<std::string>>;

std::string xml_escape(std::string_view s);

std::string emit_graphml(const EgoSubgraph& sub, const GraphMLSchema& schema, const NodeTexts& node_texts);

struct ParsedGraphML {
  GraphMLSchema schema;
  EgoSubgraph skeleton;  // global_ids = 0..n-1, edges in local ids; no features
  NodeTexts node_texts;
  std::vector<std::string> edge_relations;  // in document order
  std::vector<std::pair<std::size_t, std::size_t>> edge_order;  // endpoints as written
};

ParsedGraphML parse_graphml(const std::string& doc);

// Splits "title || abstract" style node text into `parts` fields; missing
// trailing fields become empty strings and extra separators stay in the last.
std::vector<std::string> split_node_text(std::string_view raw, std::size_t parts);

// Cuts to at most `budget` bytes without splitting a UTF-8 sequence.
// A budget of 0 disables truncation.
std::string truncate_text(std::string_view s, std::size_t budget);

// Per-node attribute values for a sampled subgraph, truncated to `budget`.
NodeTexts subgraph_node_texts(const TextAttributedGraph& g, const EgoSubgraph& sub, const GraphMLSchema& schema,
                              std::size_t budget);

}  // namespace graphclip
