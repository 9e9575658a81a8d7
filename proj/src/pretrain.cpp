#include "graphclip/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace graphclip {

double PerturbationConfig::effective_step_size() const {
  return step_size > 0.0 ? step_size : epsilon / static_cast<double>(steps);
}

void PerturbationConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ValidationError("perturbation epsilon must be >= 0");
  if (steps < 1) throw ValidationError("perturbation needs at least one inner step");
  if (step_size < 0.0) throw ValidationError("perturbation step size must be >= 0");
}

double perturbation_norm(const Matrix& m, PerturbationNorm p) {
  if (p == PerturbationNorm::L2) return frobenius_norm(m);
  double mx = 0.0;
  for (double v : m.values()) mx = std::max(mx, std::abs(v));
  return mx;
}

double PerturbationState::block_norm(std::size_t block) const {
  return perturbation_norm(blocks.at(block), config.norm);
}

bool PerturbationState::ascend(std::size_t block, const Matrix& grad) {
  Matrix& d = blocks.at(block);
  if (!d.same_shape(grad)) throw ShapeError("perturbation gradient " + grad.shape_str() + " vs " + d.shape_str());
  const double alpha = config.effective_step_size();
  const double eps = config.epsilon;
  if (config.norm == PerturbationNorm::L2) {
    const double gn = frobenius_norm(grad);
    if (gn == 0.0) return false;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += alpha * grad[i] / gn;
    const double n = frobenius_norm(d);
    if (n > eps) d *= eps / n;
  } else {
    bool any = false;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (grad[i] == 0.0) continue;
      any = true;
      d[i] += alpha * (grad[i] > 0.0 ? 1.0 : -1.0);
    }
    if (!any) return false;
    for (double& v : d.values()) v = std::clamp(v, -eps, eps);
  }
  return true;
}

namespace {

struct BatchEvaluation {
  double loss = 0.0;
  AlignmentUniformity metrics;
  std::vector<Matrix> input_grads;
};

// Forward every subgraph (in parallel), evaluate the batch loss, backward every
// tape and add parameter gradients into `param_grads` in subgraph order.
BatchEvaluation evaluate_batch(const ParamStore& params, std::span<const EgoSubgraph> batch, const Matrix& summaries,
                               const std::vector<Matrix>* delta, double temperature,
                               std::vector<Matrix>* param_grads, bool need_input_grads) {
  const std::size_t b = batch.size();
  const std::size_t d = params.config().text_dim;
  std::vector<GraphForward> fwds(b);
  Matrix h(b, d);
  const bool want_grads = param_grads != nullptr || need_input_grads;
  const auto nb = static_cast<std::ptrdiff_t>(b);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < nb; ++i) {
    const auto k = static_cast<std::size_t>(i);
    fwds[k] = forward_graph(params, batch[k], delta ? &(*delta)[k] : nullptr,
                            {.param_grads = param_grads != nullptr, .input_grad = need_input_grads});
    const Matrix& out = fwds[k].tape.value(fwds[k].output);
    std::copy(out.values().begin(), out.values().end(), h.row_span(k).begin());
  }
  const ContrastiveBatch cb{h, summaries};
  const auto loss = contrastive_loss(cb, temperature);
  BatchEvaluation ev;
  ev.loss = loss.value;
  ev.metrics = alignment_uniformity(cb);
  if (!want_grads) return ev;

  std::vector<std::vector<Matrix>> per(b);
  ev.input_grads.resize(b);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < nb; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (param_grads) {
      for (const auto& t : params.tensors()) per[k].emplace_back(t.value.rows(), t.value.cols());
    }
    ev.input_grads[k] = backward_graph(fwds[k], Matrix::row(loss.grad.row_span(k)), param_grads ? &per[k] : nullptr);
    fwds[k] = GraphForward{};
  }
  if (param_grads)
    for (std::size_t k = 0; k < b; ++k)
      for (std::size_t t = 0; t < param_grads->size(); ++t) (*param_grads)[t] += per[k][t];
  return ev;
}

std::vector<Matrix> zero_grads(const ParamStore& params) {
  std::vector<Matrix> g;
  for (const auto& t : params.tensors()) g.emplace_back(t.value.rows(), t.value.cols());
  return g;
}

}  // namespace

InnerResult inner_maximize(const ParamStore& params, std::span<const EgoSubgraph> batch, const Matrix& summaries,
                           const PerturbationConfig& pert, double temperature, bool evaluate_final) {
  pert.validate();
  if (batch.empty()) throw ValidationError("inner_maximize: empty batch");
  require_shape(summaries, batch.size(), params.config().text_dim, "summary embeddings");

  InnerResult r;
  PerturbationState state{pert, {}};
  for (const auto& s : batch) state.blocks.emplace_back(s.size(), params.config().text_dim);

  std::vector<Matrix> acc = zero_grads(params);
  if (pert.epsilon == 0.0) {
    const auto ev = evaluate_batch(params, batch, summaries, nullptr, temperature, &acc, false);
    r.initial_loss = r.final_loss = ev.loss;
    r.clean_metrics = ev.metrics;
    r.param_grads = std::move(acc);
    r.delta = std::move(state.blocks);
    return r;
  }

  for (std::size_t step = 0; step < pert.steps; ++step) {
    const auto ev = evaluate_batch(params, batch, summaries, &state.blocks, temperature, &acc, true);
    if (step == 0) {
      r.initial_loss = ev.loss;
      r.clean_metrics = ev.metrics;
    }
    std::vector<double> norms(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!state.ascend(i, ev.input_grads[i])) ++r.skipped_updates;
      norms[i] = state.block_norm(i);
    }
    r.delta_norms.push_back(std::move(norms));
  }
  const double inv_m = 1.0 / static_cast<double>(pert.steps);
  for (auto& g : acc) g *= inv_m;
  r.param_grads = std::move(acc);
  r.final_loss = evaluate_final
                     ? evaluate_batch(params, batch, summaries, &state.blocks, temperature, nullptr, false).loss
                     : r.initial_loss;
  r.delta = std::move(state.blocks);
  return r;
}

AdamW::AdamW(const ParamStore& params, OptimizerConfig cfg) : cfg_(cfg) {
  for (const auto& t : params.tensors()) {
    m_.emplace_back(t.value.rows(), t.value.cols());
    v_.emplace_back(t.value.rows(), t.value.cols());
  }
}

AdamW::AdamW(std::vector<std::pair<std::size_t, std::size_t>> shapes, OptimizerConfig cfg) : cfg_(cfg) {
  for (auto [r, c] : shapes) {
    m_.emplace_back(r, c);
    v_.emplace_back(r, c);
  }
}

void AdamW::step(std::vector<Tensor>& tensors, const std::vector<Matrix>& grads) {
  if (tensors.size() != m_.size() || grads.size() != m_.size())
    throw ShapeError("optimizer state does not match parameter list");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Matrix& p = tensors[k].value;
    const Matrix& g = grads[k];
    if (!p.same_shape(g)) throw ShapeError("gradient shape mismatch for " + tensors[k].name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= 1.0 - cfg_.lr * cfg_.weight_decay;
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= cfg_.lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + cfg_.eps);
    }
  }
}

void AdamW::step(Matrix& value, const Matrix& grad, std::size_t slot) {
  if (slot >= m_.size() || !value.same_shape(m_[slot]) || !grad.same_shape(m_[slot]))
    throw ShapeError("optimizer slot shape mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < value.size(); ++i) {
    value[i] *= 1.0 - cfg_.lr * cfg_.weight_decay;
    m_[slot][i] = cfg_.beta1 * m_[slot][i] + (1.0 - cfg_.beta1) * grad[i];
    v_[slot][i] = cfg_.beta2 * v_[slot][i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    value[i] -= cfg_.lr * (m_[slot][i] / bc1) / (std::sqrt(v_[slot][i] / bc2) + cfg_.eps);
  }
}

namespace {

void gather_batch(std::span<const TrainingExample> data, std::span<const std::size_t> idx,
                  std::vector<EgoSubgraph>& subs, Matrix& u) {
  subs.clear();
  const std::size_t d = data[idx[0]].summary.size();
  u = Matrix(idx.size(), d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& ex = data[idx[i]];
    subs.push_back(ex.subgraph);
    std::copy(ex.summary.begin(), ex.summary.end(), u.row_span(i).begin());
  }
}

std::string describe_batch(std::span<const TrainingExample> data, std::span<const std::size_t> idx) {
  std::ostringstream os;
  os << "batch examples:";
  for (std::size_t i : idx) os << ' ' << i << "(seed=" << data[i].subgraph.global_ids.front() << ")";
  return os.str();
}

void dump_batch(const std::filesystem::path& path, std::span<const TrainingExample> data,
                std::span<const std::size_t> idx, const InnerResult& r) {
  std::ofstream out(path);
  out.precision(17);
  out << describe_batch(data, idx) << "\ninitial_loss " << r.initial_loss << "\nfinal_loss " << r.final_loss << '\n';
  for (std::size_t i : idx) {
    const auto& s = data[i].subgraph;
    out << "example " << i << " nodes";
    for (auto g : s.global_ids) out << ' ' << g;
    out << "\n  features";
    for (double v : s.features.values()) out << ' ' << v;
    out << "\n  summary";
    for (double v : data[i].summary) out << ' ' << v;
    out << '\n';
  }
}

}  // namespace

double evaluate_loss(const ParamStore& params, std::span<const TrainingExample> data, std::size_t batch_size,
                     double temperature) {
  if (data.empty()) throw ValidationError("evaluate_loss: empty dataset");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  std::size_t batches = 0;
  std::vector<EgoSubgraph> subs;
  Matrix u;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(idx.size(), start + batch_size);
    gather_batch(data, std::span(idx).subspan(start, end - start), subs, u);
    total += evaluate_batch(params, subs, u, nullptr, temperature, nullptr, false).loss;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

PretrainResult pretrain(std::span<const TrainingExample> data, const GraphEncoderConfig& encoder,
                        const PretrainConfig& cfg) {
  if (data.empty()) throw ValidationError("pretrain: dataset is empty");
  if (cfg.batch_size < 1) throw ValidationError("pretrain: batch size must be >= 1");
  for (const auto& ex : data)
    if (ex.summary.size() != encoder.text_dim)
      throw ShapeError("summary embedding width " + std::to_string(ex.summary.size()) + " != text_dim " +
                       std::to_string(encoder.text_dim));
  PerturbationConfig pert = cfg.perturbation;
  if (!cfg.adversary) pert.epsilon = 0.0;
  pert.validate();

  PretrainResult res;
  res.params = ParamStore(encoder);
  auto& meta = res.params.metadata();
  {
    std::ostringstream os;
    os.precision(17);
    auto put = [&](const char* k, double v) {
      os.str("");
      os << v;
      meta[k] = os.str();
    };
    put("optimizer.lr", cfg.optimizer.lr);
    put("optimizer.weight_decay", cfg.optimizer.weight_decay);
    put("pretrain.temperature", cfg.temperature);
    put("perturbation.epsilon", pert.epsilon);
    put("perturbation.step_size", pert.effective_step_size());
    meta["perturbation.steps"] = std::to_string(pert.steps);
    meta["perturbation.norm"] = pert.norm == PerturbationNorm::L2 ? "l2" : "linf";
    meta["pretrain.epochs"] = std::to_string(cfg.epochs);
    meta["pretrain.batch_size"] = std::to_string(cfg.batch_size);
    meta["pretrain.seed"] = std::to_string(cfg.seed);
  }
  AdamW opt(res.params, cfg.optimizer);
  res.initial_eval_loss = evaluate_loss(res.params, data, cfg.batch_size, cfg.temperature);

  if (cfg.output_dir) std::filesystem::create_directories(*cfg.output_dir);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EgoSubgraph> subs;
  Matrix u;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.seed ^ mix_seed(epoch + 1)));
    // Fisher-Yates with the portable uniform draw.
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto idx = std::span<const std::size_t>(order).subspan(start, end - start);
      gather_batch(data, idx, subs, u);
      const InnerResult inner = inner_maximize(res.params, subs, u, pert, cfg.temperature, false);
      bool finite = std::isfinite(inner.initial_loss);
      for (const auto& g : inner.param_grads)
        for (double v : g.values()) finite = finite && std::isfinite(v);
      if (!finite) {
        std::string where;
        if (cfg.output_dir) {
          const auto dump = *cfg.output_dir / ("nonfinite_step" + std::to_string(step) + ".txt");
          dump_batch(dump, data, idx, inner);
          where = "; dump written to " + dump.string();
        }
        throw NumericError("non-finite loss or gradient at step " + std::to_string(step) + " (epoch " +
                           std::to_string(epoch) + "), " + describe_batch(data, idx) + where);
      }
      opt.step(res.params.tensors(), inner.param_grads);

      MetricsRow row;
      row.step = step;
      row.epoch = epoch;
      row.loss = inner.initial_loss;
      row.alignment = inner.clean_metrics.alignment;
      row.uniformity = inner.clean_metrics.uniformity;
      row.lr = cfg.optimizer.lr;
      std::size_t count = 0;
      for (const auto& norms : inner.delta_norms)
        for (double n : norms) {
          res.delta_norms.push_back(n);
          row.delta_norm_mean += n;
          ++count;
        }
      if (!inner.delta_norms.empty()) {
        // Logged mean refers to the final δ of each subgraph.
        row.delta_norm_mean = 0.0;
        for (double n : inner.delta_norms.back()) row.delta_norm_mean += n;
        row.delta_norm_mean /= static_cast<double>(inner.delta_norms.back().size());
      }
      (void)count;
      res.metrics.push_back(row);
      ++step;
    }
    if (cfg.output_dir) {
      res.params.save(*cfg.output_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".bin"));
      write_metrics_csv(res.metrics, *cfg.output_dir / "metrics.csv");
    }
  }
  res.final_eval_loss = evaluate_loss(res.params, data, cfg.batch_size, cfg.temperature);
  if (cfg.output_dir) res.params.save(*cfg.output_dir / "checkpoint.bin");
  return res;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write metrics log " + path.string());
  out.precision(10);
  out << "step,epoch,loss,alignment,uniformity,delta_norm_mean,lr\n";
  for (const auto& r : rows)
    out << r.step << ',' << r.epoch << ',' << r.loss << ',' << r.alignment << ',' << r.uniformity << ','
        << r.delta_norm_mean << ',' << r.lr << '\n';
}

std::vector<TrainingExample> build_training_set(std::span<const GraphSummaryPair> pairs,
                                                const std::map<std::string, const TextAttributedGraph*>& graphs,
                                                const SamplerConfig& sampler, const TextEncoder& text,
                                                std::size_t pe_dim) {
  std::vector<TrainingExample> out(pairs.size());
  std::vector<std::string> errors(pairs.size());
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& p = pairs[k];
    try {
      auto it = graphs.find(p.source_graph);
      if (it == graphs.end()) throw ValidationError("unknown source graph '" + p.source_graph + "'");
      SamplerConfig cfg = sampler;
      cfg.rng_seed = p.sampler_seed;
      out[k].subgraph = make_ego_subgraph(*it->second, p.seed, cfg, pe_dim);
      out[k].summary = text.encode(p.summary).values;
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k)
    if (!errors[k].empty()) throw ValidationError("pair " + std::to_string(k) + ": " + errors[k]);
  return out;
}

}  // namespace graphclip
