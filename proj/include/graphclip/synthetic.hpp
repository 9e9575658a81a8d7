#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphclip/adapt.hpp"
#include "graphclip/corpus.hpp"
#include "graphclip/graph.hpp"
#include "graphclip/text_encoder.hpp"

namespace graphclip::synthetic {

// Three research topics with disjoint keyword lists, plus shared filler.
const std::vector<std::string>& class_names();
const std::vector<std::vector<std::string>>& topic_words();
const std::vector<std::string>& filler_words();

inline constexpr const char* kLabelTemplate = "this paper has a topic on {class} {class_desc}";

struct GraphConfig {
  std::size_t nodes = 200;
  double p_in = 0.06;     // edge probability inside a class
  double p_out = 0.004;   // across classes
  double topic_share = 0.6;  // chance a text word is drawn from the node's own topic
  std::size_t title_words = 4;
  std::size_t abstract_words = 10;
  std::uint64_t seed = 1;
};

// Homophilous stochastic block model with balanced classes; node text is
// "title || abstract".
TextAttributedGraph make_graph(const GraphConfig& cfg);

// Stand-in for LLM summaries: a sample of the seed's topic keywords mixed
// with filler words.
std::vector<GraphSummaryPair> make_summaries(const TextAttributedGraph& g, const std::string& source_graph,
                                             std::uint64_t sampler_seed, std::uint64_t seed);

LabelPromptSet label_prompts();

// Encodes every node's raw text as its feature row.
void attach_text_features(TextAttributedGraph& g, const TextEncoder& text);

}  // namespace graphclip::synthetic
