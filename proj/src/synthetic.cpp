#include "graphclip/synthetic.hpp"

#include <random>

namespace graphclip::synthetic {

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"vision", "language", "robotics"};
  return names;
}

const std::vector<std::vector<std::string>>& topic_words() {
  static const std::vector<std::vector<std::string>> words{
      {"image", "pixel", "convolution", "camera", "segmentation", "detection"},
      {"text", "token", "grammar", "translation", "sentence", "parsing"},
      {"robot", "motor", "control", "gripper", "navigation", "sensor"},
  };
  return words;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words{"method", "results", "novel", "approach", "analysis", "study",
                                              "proposed", "framework", "evaluation", "data", "efficient", "model"};
  return words;
}

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)), n - 1);
}

std::string words_for(std::size_t cls, std::size_t count, double share, std::mt19937_64& rng) {
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& pool = uniform01(rng) < share ? topic_words()[cls] : filler_words();
    if (!out.empty()) out += ' ';
    out += pool[pick(rng, pool.size())];
  }
  return out;
}

}  // namespace

TextAttributedGraph make_graph(const GraphConfig& cfg) {
  const std::size_t classes = class_names().size();
  if (cfg.nodes < classes) throw ValidationError("synthetic graph needs at least one node per class");
  std::mt19937_64 rng(mix_seed(cfg.seed));
  std::vector<std::optional<int>> labels(cfg.nodes);
  std::vector<std::string> text(cfg.nodes);
  for (std::size_t v = 0; v < cfg.nodes; ++v) {
    const std::size_t cls = v % classes;
    labels[v] = static_cast<int>(cls);
    text[v] = words_for(cls, cfg.title_words, cfg.topic_share, rng) + " || " +
              words_for(cls, cfg.abstract_words, cfg.topic_share, rng);
  }
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < cfg.nodes; ++u)
    for (std::size_t v = u + 1; v < cfg.nodes; ++v)
      if (uniform01(rng) < (u % classes == v % classes ? cfg.p_in : cfg.p_out))
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  return TextAttributedGraph(cfg.nodes, std::move(edges), std::move(text), std::move(labels), class_names());
}

std::vector<GraphSummaryPair> make_summaries(const TextAttributedGraph& g, const std::string& source_graph,
                                             std::uint64_t sampler_seed, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed ^ 0x73756d6dULL));
  std::vector<GraphSummaryPair> out;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const auto cls = static_cast<std::size_t>(g.labels().at(v).value());
    GraphSummaryPair p;
    p.source_graph = source_graph;
    p.seed = static_cast<NodeId>(v);
    p.sampler_seed = sampler_seed;
    p.domain = Domain::Academic;
    p.summary = "Focus: " + words_for(cls, 8, 0.9, rng) + ".";
    p.token_count = whitespace_token_count(p.summary);
    out.push_back(std::move(p));
  }
  return out;
}

LabelPromptSet label_prompts() {
  std::vector<std::string> desc;
  for (const auto& words : topic_words()) {
    std::string d = "which studies";
    for (const auto& w : words) d += " " + w;
    desc.push_back(d);
  }
  return LabelPromptSet::from_names(class_names(), kLabelTemplate, desc);
}

void attach_text_features(TextAttributedGraph& g, const TextEncoder& text) {
  g.set_features(encode_texts(text, g.raw_text()));
}

}  // namespace graphclip::synthetic
