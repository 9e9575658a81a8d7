#pragma once

// Synthetic transfer setup shared by the acceptance run and the unit tests:
// a 200-node source graph with class-keyword summaries, a disjoint 300-node
// target graph, and the toy pretraining settings.

#include <map>
#include <string>
#include <vector>

#include "graphclip/adapt.hpp"
#include "graphclip/pretrain.hpp"
#include "graphclip/synthetic.hpp"
#include "graphclip/text_encoder.hpp"

namespace fixture {

using namespace graphclip;

struct Transfer {
  HashTextEncoder text{16};
  TextAttributedGraph source, target;
  SamplerConfig sampler;
  GraphEncoderConfig encoder;
  LabelPromptSet labels;
  std::vector<TrainingExample> data;
};

inline Transfer make_transfer(std::uint64_t target_seed = 2) {
  Transfer t;
  synthetic::GraphConfig sc;
  sc.nodes = 200;
  sc.seed = 1;
  t.source = synthetic::make_graph(sc);
  synthetic::attach_text_features(t.source, t.text);
  synthetic::GraphConfig tc;
  tc.nodes = 300;
  tc.seed = target_seed;
  t.target = synthetic::make_graph(tc);
  synthetic::attach_text_features(t.target, t.text);

  t.encoder.layers = 2;
  t.encoder.hidden = 32;
  t.encoder.text_dim = t.text.dim();
  const auto pairs = synthetic::make_summaries(t.source, "source", t.sampler.rng_seed, 3);
  std::map<std::string, const TextAttributedGraph*> graphs{{"source", &t.source}};
  t.data = build_training_set(pairs, graphs, t.sampler, t.text, t.encoder.pe_dim);
  t.labels = synthetic::label_prompts();
  t.labels.embed(t.text);
  return t;
}

inline PretrainConfig toy_pretrain(std::size_t epochs = 10) {
  PretrainConfig pc;
  pc.epochs = epochs;
  pc.batch_size = 32;
  pc.temperature = 0.1;
  pc.optimizer.lr = 2e-3;
  pc.adversary = true;
  pc.perturbation.epsilon = 1e-2;
  pc.perturbation.steps = 3;
  return pc;
}

}  // namespace fixture
