#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphclip/corpus.hpp"
#include "graphclip/graph_encoder.hpp"
#include "graphclip/losses.hpp"

namespace graphclip {

enum class PerturbationNorm { L2, Linf };

// Adversarial feature perturbation: δ lives in a per-subgraph ‖·‖_p ball of
// radius epsilon and is refined by `steps` normalized ascent steps.
struct PerturbationConfig {
  double epsilon = 1e-2;
  std::size_t steps = 3;
  double step_size = 0.0;  // 0 selects epsilon / steps
  PerturbationNorm norm = PerturbationNorm::L2;

  double effective_step_size() const;
  void validate() const;
};

// δ rows for every node of every subgraph in a batch, one block per subgraph.
struct PerturbationState {
  PerturbationConfig config;
  std::vector<Matrix> blocks;

  // Normalized ascent step followed by exact projection onto the ball.
  // Returns false (and leaves the block unchanged) for a zero gradient.
  bool ascend(std::size_t block, const Matrix& grad);
  double block_norm(std::size_t block) const;
};

double perturbation_norm(const Matrix& m, PerturbationNorm p);

struct InnerResult {
  std::vector<Matrix> delta;             // final δ per subgraph
  std::vector<Matrix> param_grads;       // averaged over the inner steps, in tensor order
  double initial_loss = 0.0;             // loss at δ = 0
  double final_loss = 0.0;               // loss at the final δ
  AlignmentUniformity clean_metrics;     // at δ = 0
  std::vector<std::vector<double>> delta_norms;  // [step][subgraph], after each update
  std::size_t skipped_updates = 0;       // blocks with zero gradient
};

// Approximates the inner maximization over δ with `steps` ascent steps. After
// each evaluation the parameter gradients at the current δ are accumulated;
// the result is their mean. With epsilon = 0 the feasible set is {0}, so a
// single evaluation is performed. `evaluate_final` re-evaluates the loss at
// the final δ.
InnerResult inner_maximize(const ParamStore& params, std::span<const EgoSubgraph> batch, const Matrix& summaries,
                           const PerturbationConfig& pert, double temperature, bool evaluate_final = true);

struct OptimizerConfig {
  double lr = 1e-5;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay.
class AdamW {
 public:
  AdamW(const ParamStore& params, OptimizerConfig cfg);
  void step(std::vector<Tensor>& tensors, const std::vector<Matrix>& grads);
  // Single-tensor form used by prompt tuning.
  void step(Matrix& value, const Matrix& grad, std::size_t slot = 0);
  explicit AdamW(std::vector<std::pair<std::size_t, std::size_t>> shapes, OptimizerConfig cfg);

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

struct TrainingExample {
  EgoSubgraph subgraph;
  std::vector<double> summary;  // frozen text embedding, unit norm
};

struct PretrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double temperature = 0.1;
  bool adversary = true;
  PerturbationConfig perturbation;
  OptimizerConfig optimizer;
  std::optional<std::filesystem::path> output_dir;  // checkpoints, metrics.csv
};

struct MetricsRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double alignment = 0.0;
  double uniformity = 0.0;
  double delta_norm_mean = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  ParamStore params;
  std::vector<MetricsRow> metrics;
  std::vector<double> delta_norms;  // every per-subgraph norm after every inner update
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
};

// Mean contrastive loss over the dataset in fixed consecutive batches.
double evaluate_loss(const ParamStore& params, std::span<const TrainingExample> data, std::size_t batch_size,
                     double temperature);

PretrainResult pretrain(std::span<const TrainingExample> data, const GraphEncoderConfig& encoder,
                        const PretrainConfig& cfg);

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

// Rebuilds the subgraph of each pair from its source graph and encodes its
// summary with the frozen text encoder. Graphs must have features attached.
std::vector<TrainingExample> build_training_set(std::span<const GraphSummaryPair> pairs,
                                                const std::map<std::string, const TextAttributedGraph*>& graphs,
                                                const SamplerConfig& sampler, const TextEncoder& text,
                                                std::size_t pe_dim);

}  // namespace graphclip
