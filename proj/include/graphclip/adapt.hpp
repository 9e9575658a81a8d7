#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "graphclip/graph_encoder.hpp"
#include "graphclip/losses.hpp"
#include "graphclip/pretrain.hpp"

namespace graphclip {

struct LabelPrompt {
  int class_id = 0;
  std::string name;
  std::string tmpl;  // contains {class} and optionally {class_desc}
  std::string description;

  std::string sentence() const;
};

// Replaces {class} and {class_desc} in one pass.
std::string render_label_sentence(std::string_view tmpl, std::string_view name, std::string_view desc);

// Per-dataset label sentences. File format (tab separated, '#' comments):
//   <class id>\t<class name>\t<template>\t<description>
// Class ids must be 0..C-1, each exactly once.
struct LabelPromptSet {
  std::vector<LabelPrompt> classes;  // sorted by class id
  Matrix embeddings;                 // C × d_text, unit rows, after embed()

  static LabelPromptSet load(const std::filesystem::path& path);
  static LabelPromptSet parse(std::istream& in);
  // One entry per class name with a shared template and per-class description.
  static LabelPromptSet from_names(const std::vector<std::string>& names, const std::string& tmpl,
                                   const std::vector<std::string>& descriptions = {});
  void save(const std::filesystem::path& path) const;
  void embed(const TextEncoder& text);
  std::vector<std::string> sentences() const;
  std::size_t size() const noexcept { return classes.size(); }
  void validate() const;
};

struct ZeroShotResult {
  int label = 0;
  std::vector<double> scores;  // cosine per class
};

// argmax_k cos(h, u_k); ties resolve to the lowest class id.
ZeroShotResult zero_shot_classify(std::span<const double> h, const Matrix& label_embeddings);

double link_score(std::span<const double> a, std::span<const double> b);

// Area under the ROC curve via midranks; ties between a positive and a
// negative count one half.
double auc(std::span<const double> scores, const std::vector<bool>& positive);

struct MetricReport {
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;  // population

  static MetricReport from(std::vector<double> values);
};

struct EvalConfig {
  SamplerConfig sampler;
  double test_fraction = 0.2;
  std::size_t runs = 5;
  std::uint64_t seed = 0;
};

// Labeled nodes drawn at random; size round(fraction · labeled), at least 1.
std::vector<NodeId> sample_test_nodes(const TextAttributedGraph& g, double fraction, std::uint64_t seed);

// Embeds the ego-subgraph of every node in `nodes` (in parallel). `sigma`
// (1 × d_text) is added to every node feature when given.
Matrix embed_nodes(const ParamStore& params, const TextAttributedGraph& g, std::span<const NodeId> nodes,
                   const SamplerConfig& sampler, const Matrix* sigma = nullptr);

double classification_accuracy(const ParamStore& params, const TextAttributedGraph& g, std::span<const NodeId> nodes,
                               const LabelPromptSet& labels, const SamplerConfig& sampler,
                               const Matrix* sigma = nullptr);

MetricReport evaluate_node_classification(const ParamStore& params, const TextAttributedGraph& g,
                                          const LabelPromptSet& labels, const EvalConfig& cfg);

struct LinkEvalConfig {
  SamplerConfig sampler;
  double test_fraction = 0.5;  // share of edges used as positives
  std::size_t runs = 5;
  std::uint64_t seed = 0;
};

// Positives are a random share of the edges, each scored with the edge itself
// masked from both endpoint samples; one uniform non-edge per positive.
MetricReport evaluate_link_prediction(const ParamStore& params, const TextAttributedGraph& g,
                                      const LinkEvalConfig& cfg);

struct FewShotSplit {
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<NodeId>> train;  // per class
  std::vector<NodeId> test;

  std::vector<NodeId> train_nodes() const;
  std::vector<int> train_labels() const;
  void validate() const;
};

// Exactly `shots` training nodes per class; the test set is the remaining
// labeled nodes.
FewShotSplit make_few_shot_split(const TextAttributedGraph& g, std::size_t shots, std::uint64_t seed);

struct PromptTuneConfig {
  std::size_t epochs = 100;
  OptimizerConfig optimizer{1e-4, 1e-5, 0.9, 0.999, 1e-8};
  double temperature = 0.1;
  bool graph_pairs = false;  // also contrast the training subgraphs with each other
  SamplerConfig sampler;
};

struct PromptTuneResult {
  Matrix sigma;  // 1 × d_text
  std::vector<double> losses;
};

// Supervised contrastive loss of the shifted subgraphs and its gradient with
// respect to σ.
LossWithGrad prompt_loss(const ParamStore& params, std::span<const EgoSubgraph> subs, const std::vector<int>& labels,
                         const Matrix& class_sentences, const Matrix& sigma, double temperature,
                         bool graph_pairs = false);

PromptTuneResult prompt_tune(const ParamStore& params, const TextAttributedGraph& g, const FewShotSplit& split,
                             const LabelPromptSet& labels, const PromptTuneConfig& cfg);

}  // namespace graphclip
