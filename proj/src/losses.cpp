#include "graphclip/losses.hpp"

#include <algorithm>
#include <cmath>

namespace graphclip {

namespace {

double log_sum_exp(std::span<const double> xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

void ContrastiveBatch::validate() const {
  if (graphs.rows() == 0) throw ValidationError("contrastive batch is empty");
  if (!graphs.same_shape(summaries))
    throw ShapeError("contrastive batch: H " + graphs.shape_str() + " vs U " + summaries.shape_str());
}

LossWithGrad contrastive_loss(const ContrastiveBatch& batch, double temperature) {
  batch.validate();
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  const Matrix& h = batch.graphs;
  const Matrix& u = batch.summaries;
  const std::size_t b = h.rows(), d = h.cols();

  Matrix sim(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) sim(i, j) = -squared_distance(h.row_span(i), u.row_span(j)) / temperature;

  // Row softmax (graph → summary) and column softmax (summary → graph).
  Matrix p_row(b, b), p_col(b, b);
  double loss_row = 0.0, loss_col = 0.0;
  std::vector<double> buf(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) buf[j] = sim(i, j);
    const double lse = log_sum_exp(buf);
    loss_row += lse - sim(i, i);
    for (std::size_t j = 0; j < b; ++j) p_row(i, j) = std::exp(sim(i, j) - lse);
  }
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) buf[i] = sim(i, j);
    const double lse = log_sum_exp(buf);
    loss_col += lse - sim(j, j);
    for (std::size_t i = 0; i < b; ++i) p_col(i, j) = std::exp(sim(i, j) - lse);
  }
  const double inv_b = 1.0 / static_cast<double>(b);

  LossWithGrad out;
  out.value = 0.5 * (loss_row + loss_col) * inv_b;
  out.grad = Matrix(b, d);
  // ∂L/∂s_ij = (p_row_ij + p_col_ij − 2δ_ij) / (2B);  ∂s_ij/∂h_i = −2(h_i − u_j)/T.
  for (std::size_t i = 0; i < b; ++i) {
    auto gi = out.grad.row_span(i);
    for (std::size_t j = 0; j < b; ++j) {
      const double ds = 0.5 * inv_b * (p_row(i, j) + p_col(i, j) - (i == j ? 2.0 : 0.0));
      const double coef = -2.0 * ds / temperature;
      for (std::size_t c = 0; c < d; ++c) gi[c] += coef * (h(i, c) - u(j, c));
    }
  }
  return out;
}

AlignmentUniformity alignment_uniformity(const ContrastiveBatch& batch) {
  batch.validate();
  const Matrix& h = batch.graphs;
  const Matrix& u = batch.summaries;
  const std::size_t b = h.rows();
  AlignmentUniformity r;
  std::vector<double> buf(b);
  for (std::size_t i = 0; i < b; ++i) {
    r.alignment += squared_distance(h.row_span(i), u.row_span(i));
    for (std::size_t j = 0; j < b; ++j) buf[j] = -squared_distance(u.row_span(i), h.row_span(j));
    r.uniformity += log_sum_exp(buf) - std::log(static_cast<double>(b));
  }
  r.alignment /= static_cast<double>(b);
  r.uniformity /= static_cast<double>(b);
  return r;
}

LossWithGrad supervised_contrastive_loss(const Matrix& graphs, const std::vector<int>& labels,
                                         const Matrix& class_sentences, double temperature, bool graph_pairs) {
  const std::size_t b = graphs.rows(), c = class_sentences.rows(), d = graphs.cols();
  if (b == 0) throw ValidationError("supervised contrastive batch is empty");
  if (labels.size() != b) throw ShapeError("label count does not match batch size");
  if (class_sentences.cols() != d) throw ShapeError("class sentence width does not match embeddings");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw ValidationError("label outside class sentence set");

  LossWithGrad out;
  out.grad = Matrix(b, d);
  const double inv_b = 1.0 / static_cast<double>(b);
  std::vector<double> logits;
  std::vector<bool> positive;
  for (std::size_t i = 0; i < b; ++i) {
    // Candidate order: graphs j ≠ i, then class sentences k.
    logits.clear();
    positive.clear();
    for (std::size_t j = 0; j < b && graph_pairs; ++j) {
      if (j == i) continue;
      logits.push_back(dot(graphs.row_span(i), graphs.row_span(j)) / temperature);
      positive.push_back(labels[j] == labels[i]);
    }
    for (std::size_t k = 0; k < c; ++k) {
      logits.push_back(dot(graphs.row_span(i), class_sentences.row_span(k)) / temperature);
      positive.push_back(static_cast<int>(k) == labels[i]);
    }
    const double lse = log_sum_exp(logits);
    const double n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
    double li = lse;
    for (std::size_t a = 0; a < logits.size(); ++a)
      if (positive[a]) li -= logits[a] / n_pos;
    out.value += li * inv_b;

    // ∂L_i/∂z_a = p_a − [a ∈ P]/|P|;  z_a = ⟨h_i, x_a⟩/T.
    std::size_t a = 0;
    for (std::size_t j = 0; j < b && graph_pairs; ++j) {
      if (j == i) continue;
      const double dz = (std::exp(logits[a] - lse) - (positive[a] ? 1.0 / n_pos : 0.0)) * inv_b / temperature;
      for (std::size_t col = 0; col < d; ++col) {
        out.grad(i, col) += dz * graphs(j, col);
        out.grad(j, col) += dz * graphs(i, col);
      }
      ++a;
    }
    for (std::size_t k = 0; k < c; ++k, ++a) {
      const double dz = (std::exp(logits[a] - lse) - (positive[a] ? 1.0 / n_pos : 0.0)) * inv_b / temperature;
      for (std::size_t col = 0; col < d; ++col) out.grad(i, col) += dz * class_sentences(k, col);
    }
  }
  return out;
}

}  // namespace graphclip
