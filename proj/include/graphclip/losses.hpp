#pragma once

#include <vector>

#include "graphclip/matrix.hpp"

namespace graphclip {

// Graph (H) and summary (U) embeddings; row i of H is paired with row i of U.
struct ContrastiveBatch {
  Matrix graphs;     // B × d
  Matrix summaries;  // B × d

  void validate() const;
};

struct LossWithGrad {
  double value = 0.0;
  Matrix grad;  // ∂loss/∂H
};

// Symmetric cross-entropy over the B×B similarity matrix
//   s_ij = −‖h_i − u_j‖² / temperature,
// averaged over the graph→summary and summary→graph directions. On unit rows
// s_ij = (2⟨h_i, u_j⟩ − 2) / temperature, i.e. the usual cosine InfoNCE.
LossWithGrad contrastive_loss(const ContrastiveBatch& batch, double temperature);

struct AlignmentUniformity {
  double alignment = 0.0;   // mean_i ‖h_i − u_i‖²
  double uniformity = 0.0;  // mean_i log mean_j exp(−‖u_i − h_j‖²)
};

AlignmentUniformity alignment_uniformity(const ContrastiveBatch& batch);

// Supervised contrastive loss for prompt tuning. Each graph embedding h_i is
// an anchor against every class-sentence embedding, the sentence of its own
// class being the positive. With `graph_pairs` the other graphs of the batch
// are candidates too, same-class graphs counting as positives. Similarity is
// the dot product of unit rows divided by the temperature.
LossWithGrad supervised_contrastive_loss(const Matrix& graphs, const std::vector<int>& labels,
                                         const Matrix& class_sentences, double temperature,
                                         bool graph_pairs = true);

}  // namespace graphclip
