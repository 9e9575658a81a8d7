#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "graphclip/autodiff.hpp"
#include "graphclip/graph.hpp"
#include "graphclip/matrix.hpp"
#include "graphclip/text_encoder.hpp"

namespace graphclip {

enum class ScalePreset { Custom, Small, Medium, Base, Large };

std::string to_string(ScalePreset p);
ScalePreset preset_from_string(const std::string& name);

struct GraphEncoderConfig {
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t heads = 4;
  std::size_t pe_dim = 16;    // RWPE width K
  std::size_t text_dim = 16;  // d_text: node feature width and projector output
  std::size_t ffn_mult = 2;   // feed-forward hidden = ffn_mult · hidden
  ScalePreset preset = ScalePreset::Custom;
  std::uint64_t init_seed = 0x5eed;

  // Layer/hidden sizes of the four model scales; text_dim 384 to match the
  // frozen sentence encoder.
  static GraphEncoderConfig from_preset(ScalePreset p);
  void validate() const;
};

struct TensorShape {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

// Every trainable tensor of the encoder in a fixed order.
std::vector<TensorShape> parameter_shapes(const GraphEncoderConfig& cfg);
std::size_t parameter_count(const GraphEncoderConfig& cfg);

// Shape description of a frozen BERT-style sentence encoder tower, used only
// to report whole-model parameter counts.
struct TextTowerShape {
  std::size_t vocab = 30522;
  std::size_t max_positions = 512;
  std::size_t token_types = 2;
  std::size_t layers = 6;
  std::size_t hidden = 384;
  std::size_t intermediate = 1536;
  bool pooler = true;

  std::size_t parameter_count() const;
};

struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Trainable tensors of the graph encoder and projector, each with one
// gradient slot of identical shape.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(const GraphEncoderConfig& cfg);  // seeded uniform init

  const GraphEncoderConfig& config() const noexcept { return cfg_; }
  std::vector<Tensor>& tensors() noexcept { return tensors_; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t parameter_count() const;

  void zero_grad();
  std::uint64_t checksum() const;  // over values only

  // Metadata stored alongside tensors in checkpoints.
  std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  // Checkpoint: magic, version, config + metadata as JSON, then the tensor
  // table (name, rows, cols, row-major little-endian doubles).
  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

  static constexpr std::uint32_t kCheckpointVersion = 1;

 private:
  GraphEncoderConfig cfg_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::string> metadata_;
};

// Tape record of one subgraph encoding.
struct GraphForward {
  ad::Tape tape;
  ad::Var input;   // node features after the additive shift (X + δ or X + σ)
  ad::Var output;  // 1 × d_text, L2-normalized
  std::vector<std::pair<std::size_t, ad::Var>> param_vars;  // tensor index → leaf
};

struct ForwardOptions {
  bool param_grads = true;
  bool input_grad = false;
};

// Records a forward pass. `shift` (same shape as sub.features) is added to the
// node features when given. The returned tape references `params`.
GraphForward forward_graph(const ParamStore& params, const EgoSubgraph& sub, const Matrix* shift = nullptr,
                           ForwardOptions opts = {});

// Backpropagates `output_grad` (1 × d_text) and returns ∂/∂(shifted input).
// Parameter gradients are added into `param_grads` (same order as tensors).
Matrix backward_graph(GraphForward& fwd, const Matrix& output_grad, std::vector<Matrix>* param_grads);

Embedding encode_graph(const ParamStore& params, const EgoSubgraph& sub, const Matrix* shift = nullptr);

}  // namespace graphclip
