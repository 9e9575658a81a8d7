#include "graphclip/graphml.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "graphclip/errors.hpp"

namespace graphclip {

std::string to_string(Domain d) {
  switch (d) {
    case Domain::Academic: return "academic";
    case Domain::ECommerce: return "e-commerce";
    case Domain::Social: return "social";
  }
  throw ValidationError("unknown domain");
}

Domain domain_from_string(std::string_view s) {
  if (s == "academic") return Domain::Academic;
  if (s == "e-commerce" || s == "ecommerce") return Domain::ECommerce;
  if (s == "social") return Domain::Social;
  throw ValidationError("unknown domain '" + std::string(s) + "' (expected academic, e-commerce or social)");
}

void GraphMLSchema::validate() const {
  if (node_attr_keys.empty()) throw ValidationError("GraphML schema needs at least one node attribute");
  std::set<std::string> ids;
  for (const auto& [id, name] : node_attr_keys) {
    if (id.empty() || name.empty()) throw ValidationError("GraphML key id and attribute name must be nonempty");
    if (!ids.insert(id).second) throw ValidationError("duplicate GraphML key id '" + id + "'");
  }
  if (!ids.insert(edge_attr_key.first).second)
    throw ValidationError("duplicate GraphML key id '" + edge_attr_key.first + "'");
}

GraphMLSchema GraphMLSchema::for_domain(Domain d) {
  GraphMLSchema s;
  switch (d) {
    case Domain::Academic:
      s.node_attr_keys = {{"d0", "title"}, {"d1", "abstract"}};
      s.relation_word = "cited";
      break;
    case Domain::ECommerce:
      s.node_attr_keys = {{"d0", "title"}, {"d1", "description"}};
      s.relation_word = "co-purchased";
      break;
    case Domain::Social:
      s.node_attr_keys = {{"d0", "content"}};
      s.relation_word = "replied";
      break;
  }
  s.edge_attr_key = {"d" + std::to_string(s.node_attr_keys.size()), "type"};
  return s;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      case '\n': out += "&#10;"; break;
      case '\r': out += "&#13;"; break;
      case '\t': out += "&#9;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string emit_graphml(const EgoSubgraph& sub, const GraphMLSchema& schema, const NodeTexts& node_texts) {
  schema.validate();
  const std::size_t n = sub.size();
  const std::size_t k = schema.node_attr_keys.size();
  for (std::size_t v = 0; v < n; ++v) {
    if (v >= node_texts.size() || node_texts[v].size() < k) {
      const std::size_t have = v < node_texts.size() ? node_texts[v].size() : 0;
      throw ValidationError("node n" + std::to_string(v) + " is missing attribute for key " +
                            schema.node_attr_keys[have].first + " (" + schema.node_attr_keys[have].second + ")");
    }
  }
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<graphml>\n";
  for (const auto& [id, name] : schema.node_attr_keys)
    out += "<key id=\"" + id + "\" for=\"node\" attr.name=\"" + name + "\" attr.type=\"string\"/>\n";
  out += "<key id=\"" + schema.edge_attr_key.first + "\" for=\"edge\" attr.name=\"" + schema.edge_attr_key.second +
         "\" attr.type=\"string\"/>\n";
  out += "<graph id=\"G\" edgedefault=\"undirected\">\n";
  for (std::size_t v = 0; v < n; ++v) {
    out += "    <node id=\"n" + std::to_string(v) + "\">\n";
    for (std::size_t a = 0; a < k; ++a)
      out += "            <data key=\"" + schema.node_attr_keys[a].first + "\">" + xml_escape(node_texts[v][a]) +
             "</data>\n";
    out += "    </node>\n";
  }
  const std::string relation = xml_escape(schema.relation_word);
  for (std::size_t e = 0; e < sub.edges.size(); ++e) {
    const auto [a, b] = sub.edges[e];
    out += "    <edge id=\"e" + std::to_string(e) + "\" source=\"n" + std::to_string(a) + "\" target=\"n" +
           std::to_string(b) + "\">\n";
    out += "            <data key=\"" + schema.edge_attr_key.first + "\" >" + relation + "</data>\n";
    out += "    </edge>\n";
  }
  out += "</graph>\n</graphml>\n";
  return out;
}

namespace {

namespace pt = boost::property_tree;

std::size_t node_index(const std::string& id, const std::map<std::string, std::size_t>& nodes, const char* role,
                       const std::string& edge_id) {
  auto it = nodes.find(id);
  if (it == nodes.end())
    throw ParseError("edge " + edge_id + " " + role + " references undeclared node '" + id + "'");
  return it->second;
}

}  // namespace

ParsedGraphML parse_graphml(const std::string& doc) {
  pt::ptree tree;
  std::istringstream in(doc);
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("malformed GraphML: " + std::string(e.message()), e.line());
  }
  const auto root = tree.get_child_optional("graphml");
  if (!root) throw ParseError("missing <graphml> root element");

  ParsedGraphML out;
  out.schema.node_attr_keys.clear();
  std::map<std::string, std::size_t> node_key_index;
  std::string edge_key;
  const pt::ptree* graph = nullptr;
  for (const auto& [tag, child] : *root) {
    if (tag == "key") {
      const auto id = child.get<std::string>("<xmlattr>.id", "");
      const auto domain = child.get<std::string>("<xmlattr>.for", "");
      // '.' is the default path separator, so this key needs another one.
      const auto name = child.get<std::string>(pt::ptree::path_type("<xmlattr>/attr.name", '/'), "");
      if (domain == "node") {
        node_key_index[id] = out.schema.node_attr_keys.size();
        out.schema.node_attr_keys.emplace_back(id, name);
      } else if (domain == "edge") {
        out.schema.edge_attr_key = {id, name};
        edge_key = id;
      } else {
        throw ParseError("key '" + id + "' has unsupported domain '" + domain + "'");
      }
    } else if (tag == "graph") {
      if (graph) throw ParseError("more than one <graph> element");
      graph = &child;
    } else if (tag != "<xmlattr>" && tag != "<xmlcomment>") {
      throw ParseError("unexpected element <" + tag + "> under <graphml>");
    }
  }
  if (!graph) throw ParseError("missing <graph> element");
  try {
    out.schema.validate();
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }

  std::map<std::string, std::size_t> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  bool relation_seen = false;
  for (const auto& [tag, child] : *graph) {
    if (tag == "node") {
      const auto id = child.get<std::string>("<xmlattr>.id", "");
      if (!nodes.emplace(id, nodes.size()).second) throw ParseError("duplicate node id '" + id + "'");
      std::vector<std::string> values(out.schema.node_attr_keys.size());
      for (const auto& [dtag, data] : child) {
        if (dtag != "data") continue;
        const auto key = data.get<std::string>("<xmlattr>.key", "");
        auto it = node_key_index.find(key);
        if (it == node_key_index.end()) throw ParseError("node '" + id + "' uses unknown key id '" + key + "'");
        values[it->second] = data.data();
      }
      out.node_texts.push_back(std::move(values));
    } else if (tag == "edge") {
      const auto id = child.get<std::string>("<xmlattr>.id", "");
      const auto a = node_index(child.get<std::string>("<xmlattr>.source", ""), nodes, "source", id);
      const auto b = node_index(child.get<std::string>("<xmlattr>.target", ""), nodes, "target", id);
      std::string relation;
      for (const auto& [dtag, data] : child) {
        if (dtag != "data") continue;
        const auto key = data.get<std::string>("<xmlattr>.key", "");
        if (key != edge_key) throw ParseError("edge '" + id + "' uses unknown key id '" + key + "'");
        relation = data.data();
      }
      if (!relation_seen) {
        out.schema.relation_word = relation;
        relation_seen = true;
      }
      out.edge_relations.push_back(relation);
      out.edge_order.emplace_back(a, b);
      edges.emplace_back(std::min(a, b), std::max(a, b));
    } else if (tag != "<xmlattr>" && tag != "<xmlcomment>") {
      throw ParseError("unexpected element <" + tag + "> under <graph>");
    }
  }
  out.skeleton.global_ids.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) out.skeleton.global_ids[i] = static_cast<NodeId>(i);
  // Nodes are indexed in document order; the emitter writes them as n0..n{k}.
  std::sort(edges.begin(), edges.end());
  out.skeleton.edges = std::move(edges);
  return out;
}

std::vector<std::string> split_node_text(std::string_view raw, std::size_t parts) {
  static constexpr std::string_view sep = " || ";
  std::vector<std::string> out;
  while (out.size() + 1 < parts) {
    const auto pos = raw.find(sep);
    if (pos == std::string_view::npos) break;
    out.emplace_back(raw.substr(0, pos));
    raw.remove_prefix(pos + sep.size());
  }
  out.emplace_back(raw);
  out.resize(parts);
  return out;
}

std::string truncate_text(std::string_view s, std::size_t budget) {
  if (budget == 0 || s.size() <= budget) return std::string(s);
  std::size_t cut = budget;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

NodeTexts subgraph_node_texts(const TextAttributedGraph& g, const EgoSubgraph& sub, const GraphMLSchema& schema,
                              std::size_t budget) {
  NodeTexts out;
  for (NodeId id : sub.global_ids) {
    auto fields = split_node_text(g.raw_text().at(id), schema.node_attr_keys.size());
    for (auto& f : fields) f = truncate_text(f, budget);
    out.push_back(std::move(fields));
  }
  return out;
}

}  // namespace graphclip
