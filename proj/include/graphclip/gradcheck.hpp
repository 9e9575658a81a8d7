#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graphclip/graph_encoder.hpp"

namespace graphclip {

struct GradCheckOptions {
  GraphEncoderConfig encoder;
  std::size_t trials = 1;
  std::size_t nodes = 3;        // nodes per random subgraph
  std::size_t batch = 2;        // subgraphs per contrastive batch
  double step = 1e-5;           // central-difference step
  double tolerance = 1e-4;      // max relative error per tensor
  std::size_t max_entries = 200;  // entries checked per tensor (random subset beyond this)
  double temperature = 0.1;
  std::uint64_t seed = 7;
  // Negative control: perturb the analytic gradient of this tensor.
  std::optional<std::string> corrupt_tensor;
};

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  double rel_error = 0.0;  // ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-5)
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double worst_rel_error = 0.0;
  bool passed = true;

  std::string to_text() const;
};

// Compares analytic gradients against central finite differences for every
// encoder tensor, the node-feature input, the contrastive loss w.r.t. H and
// the supervised contrastive loss w.r.t. its graph embeddings. Worst error per
// name is kept across trials.
GradCheckReport grad_check(const GradCheckOptions& opts);

// Random connected subgraph with features and RWPE, used by gradient checks.
EgoSubgraph random_subgraph(std::size_t nodes, std::size_t text_dim, std::size_t pe_dim, std::uint64_t seed);

}  // namespace graphclip
