#include "graphclip/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "graphclip/losses.hpp"

namespace graphclip {

namespace {

double normal(std::mt19937_64& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Matrix random_unit_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return normalize_rows(std::move(m));
}

std::vector<std::size_t> pick_entries(std::size_t size, std::size_t max_entries, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (size > max_entries) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_entries);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

constexpr double kNormFloor = 1e-5;

struct Accumulator {
  std::vector<double> analytic, numeric;
};

TensorCheck summarize(const std::string& name, const Accumulator& acc, double tol) {
  TensorCheck c;
  c.name = name;
  c.entries = acc.analytic.size();
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < acc.analytic.size(); ++i) {
    const double d = acc.analytic[i] - acc.numeric[i];
    diff += d * d;
    na += acc.analytic[i] * acc.analytic[i];
    nn += acc.numeric[i] * acc.numeric[i];
    c.max_abs_error = std::max(c.max_abs_error, std::abs(d));
  }
  // Tensors with an identically zero gradient (attention key bias: softmax is
  // shift invariant per row) leave only ~1e-10 difference noise, so the
  // denominator is floored well above that.
  c.rel_error = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), kNormFloor});
  c.passed = c.rel_error < tol;
  return c;
}

double batch_loss(const ParamStore& params, const std::vector<EgoSubgraph>& subs, const Matrix& u,
                  double temperature) {
  Matrix h(subs.size(), u.cols());
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const auto e = encode_graph(params, subs[i]);
    std::copy(e.values.begin(), e.values.end(), h.row_span(i).begin());
  }
  return contrastive_loss({h, u}, temperature).value;
}

}  // namespace

EgoSubgraph random_subgraph(std::size_t nodes, std::size_t text_dim, std::size_t pe_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EgoSubgraph sub;
  for (std::size_t i = 0; i < nodes; ++i) sub.global_ids.push_back(static_cast<NodeId>(i));
  // Random spanning tree plus extra edges.
  for (std::size_t i = 1; i < nodes; ++i) {
    const std::size_t parent = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    sub.edges.emplace_back(std::min(parent, i), std::max(parent, i));
  }
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = i + 1; j < nodes; ++j)
      if (uniform01(rng) < 0.3) sub.edges.emplace_back(i, j);
  std::sort(sub.edges.begin(), sub.edges.end());
  sub.edges.erase(std::unique(sub.edges.begin(), sub.edges.end()), sub.edges.end());
  sub.features = Matrix(nodes, text_dim);
  for (double& v : sub.features.values()) v = normal(rng) * 0.5;
  sub.positional = rwpe(sub, pe_dim);
  return sub;
}

GradCheckReport grad_check(const GradCheckOptions& opts) {
  std::map<std::string, TensorCheck> worst;
  std::vector<std::string> order;
  auto record = [&](const TensorCheck& c) {
    auto [it, fresh] = worst.emplace(c.name, c);
    if (fresh) order.push_back(c.name);
    else if (c.rel_error > it->second.rel_error) it->second = c;
  };

  for (std::size_t trial = 0; trial < opts.trials; ++trial) {
    std::mt19937_64 rng(mix_seed(opts.seed + trial));
    GraphEncoderConfig cfg = opts.encoder;
    cfg.init_seed = rng();
    ParamStore params(cfg);
    // Perturb norms and biases away from their init so every path is exercised.
    for (auto& t : params.tensors())
      if (t.name.find(".weight") == std::string::npos)
        for (double& v : t.value.values()) v += 0.1 * normal(rng);

    std::vector<EgoSubgraph> subs;
    for (std::size_t b = 0; b < opts.batch; ++b)
      subs.push_back(random_subgraph(opts.nodes + b % 2, cfg.text_dim, cfg.pe_dim, rng()));
    const Matrix u = random_unit_rows(opts.batch, cfg.text_dim, rng);

    // Analytic gradients.
    std::vector<Matrix> grads;
    for (const auto& t : params.tensors()) grads.emplace_back(t.value.rows(), t.value.cols());
    std::vector<GraphForward> fwds;
    Matrix h(opts.batch, cfg.text_dim);
    for (std::size_t b = 0; b < opts.batch; ++b) {
      fwds.push_back(forward_graph(params, subs[b], nullptr, {.param_grads = true, .input_grad = true}));
      const Matrix& out = fwds.back().tape.value(fwds.back().output);
      std::copy(out.values().begin(), out.values().end(), h.row_span(b).begin());
    }
    const auto loss = contrastive_loss({h, u}, opts.temperature);
    std::vector<Matrix> input_grads;
    for (std::size_t b = 0; b < opts.batch; ++b)
      input_grads.push_back(backward_graph(fwds[b], Matrix::row(loss.grad.row_span(b)), &grads));

    if (opts.corrupt_tensor) {
      bool found = false;
      for (std::size_t i = 0; i < params.tensors().size(); ++i)
        if (params.tensors()[i].name == *opts.corrupt_tensor) {
          for (double& v : grads[i].values()) v = v * 1.5 + 1e-3;
          found = true;
        }
      if (!found) throw ValidationError("corrupt_tensor '" + *opts.corrupt_tensor + "' is not a parameter");
    }

    // Per-tensor finite differences.
    for (std::size_t ti = 0; ti < params.tensors().size(); ++ti) {
      Accumulator acc;
      Matrix& value = params.tensors()[ti].value;
      for (std::size_t e : pick_entries(value.size(), opts.max_entries, rng)) {
        const double orig = value[e];
        value[e] = orig + opts.step;
        const double lp = batch_loss(params, subs, u, opts.temperature);
        value[e] = orig - opts.step;
        const double lm = batch_loss(params, subs, u, opts.temperature);
        value[e] = orig;
        acc.analytic.push_back(grads[ti][e]);
        acc.numeric.push_back((lp - lm) / (2.0 * opts.step));
      }
      record(summarize(params.tensors()[ti].name, acc, opts.tolerance));
    }

    // ∂loss/∂X.
    {
      Accumulator acc;
      for (std::size_t b = 0; b < opts.batch; ++b) {
        Matrix& x = subs[b].features;
        for (std::size_t e : pick_entries(x.size(), opts.max_entries, rng)) {
          const double orig = x[e];
          x[e] = orig + opts.step;
          const double lp = batch_loss(params, subs, u, opts.temperature);
          x[e] = orig - opts.step;
          const double lm = batch_loss(params, subs, u, opts.temperature);
          x[e] = orig;
          acc.analytic.push_back(input_grads[b][e]);
          acc.numeric.push_back((lp - lm) / (2.0 * opts.step));
        }
      }
      record(summarize("input.features", acc, opts.tolerance));
    }

    // Losses w.r.t. their embedding inputs, on unconstrained rows.
    {
      Matrix hh = random_unit_rows(opts.batch + 2, cfg.text_dim, rng);
      const Matrix uu = random_unit_rows(opts.batch + 2, cfg.text_dim, rng);
      const auto analytic = contrastive_loss({hh, uu}, opts.temperature).grad;
      Accumulator acc;
      for (std::size_t e = 0; e < hh.size(); ++e) {
        const double orig = hh[e];
        hh[e] = orig + opts.step;
        const double lp = contrastive_loss({hh, uu}, opts.temperature).value;
        hh[e] = orig - opts.step;
        const double lm = contrastive_loss({hh, uu}, opts.temperature).value;
        hh[e] = orig;
        acc.analytic.push_back(analytic[e]);
        acc.numeric.push_back((lp - lm) / (2.0 * opts.step));
      }
      record(summarize("loss.contrastive.H", acc, opts.tolerance));
    }
    for (const bool graph_pairs : {true, false}) {
      const std::size_t classes = 3, b = 6;
      Matrix hh = random_unit_rows(b, cfg.text_dim, rng);
      const Matrix sentences = random_unit_rows(classes, cfg.text_dim, rng);
      std::vector<int> labels;
      for (std::size_t i = 0; i < b; ++i) labels.push_back(static_cast<int>(i % classes));
      auto loss = [&] { return supervised_contrastive_loss(hh, labels, sentences, opts.temperature, graph_pairs); };
      const auto analytic = loss().grad;
      Accumulator acc;
      for (std::size_t e = 0; e < hh.size(); ++e) {
        const double orig = hh[e];
        hh[e] = orig + opts.step;
        const double lp = loss().value;
        hh[e] = orig - opts.step;
        const double lm = loss().value;
        hh[e] = orig;
        acc.analytic.push_back(analytic[e]);
        acc.numeric.push_back((lp - lm) / (2.0 * opts.step));
      }
      record(summarize(graph_pairs ? "loss.supervised_contrastive.H" : "loss.supervised_contrastive_xmodal.H", acc,
                       opts.tolerance));
    }
  }

  GradCheckReport report;
  for (const auto& name : order) {
    const auto& c = worst.at(name);
    report.tensors.push_back(c);
    report.worst_rel_error = std::max(report.worst_rel_error, c.rel_error);
    report.passed = report.passed && c.passed;
  }
  return report;
}

std::string GradCheckReport::to_text() const {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific;
  for (const auto& t : tensors)
    os << (t.passed ? "ok   " : "FAIL ") << t.name << " entries=" << t.entries << " rel_err=" << t.rel_error
       << " max_abs_err=" << t.max_abs_error << '\n';
  os << "worst_rel_error=" << worst_rel_error << " verdict=" << (passed ? "pass" : "fail") << '\n';
  return os.str();
}

}  // namespace graphclip
