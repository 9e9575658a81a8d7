#include "graphclip/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace graphclip {

std::string render_label_sentence(std::string_view tmpl, std::string_view name, std::string_view desc) {
  static constexpr std::string_view kClass = "{class}", kDesc = "{class_desc}";
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.compare(i, kDesc.size(), kDesc) == 0) {
      out += desc;
      i += kDesc.size();
    } else if (tmpl.compare(i, kClass.size(), kClass) == 0) {
      out += name;
      i += kClass.size();
    } else {
      out += tmpl[i++];
    }
  }
  // An empty description leaves a dangling separator.
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string LabelPrompt::sentence() const { return render_label_sentence(tmpl, name, description); }

void LabelPromptSet::validate() const {
  if (classes.empty()) throw ValidationError("label prompt set is empty");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].class_id != static_cast<int>(i))
      throw ValidationError("label prompt class ids must be 0..C-1 without gaps (found " +
                            std::to_string(classes[i].class_id) + " at position " + std::to_string(i) + ")");
    if (classes[i].tmpl.find("{class}") == std::string::npos)
      throw ValidationError("label template for class " + std::to_string(i) + " lacks {class}");
  }
  if (!embeddings.empty()) require_shape(embeddings, classes.size(), embeddings.cols(), "label embeddings");
}

LabelPromptSet LabelPromptSet::parse(std::istream& in) {
  LabelPromptSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() < 3 || f.size() > 4)
      throw ParseError("expected <id>\\t<name>\\t<template>[\\t<description>]", lineno);
    LabelPrompt p;
    try {
      std::size_t used = 0;
      p.class_id = std::stoi(f[0], &used);
      if (used != f[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("bad class id '" + f[0] + "'", lineno);
    }
    p.name = f[1];
    p.tmpl = f[2];
    if (f.size() == 4) p.description = f[3];
    set.classes.push_back(std::move(p));
  }
  std::sort(set.classes.begin(), set.classes.end(),
            [](const LabelPrompt& a, const LabelPrompt& b) { return a.class_id < b.class_id; });
  set.validate();
  return set;
}

LabelPromptSet LabelPromptSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read label prompts " + path.string());
  return parse(in);
}

LabelPromptSet LabelPromptSet::from_names(const std::vector<std::string>& names, const std::string& tmpl,
                                          const std::vector<std::string>& descriptions) {
  LabelPromptSet set;
  for (std::size_t i = 0; i < names.size(); ++i)
    set.classes.push_back({static_cast<int>(i), names[i], tmpl, i < descriptions.size() ? descriptions[i] : ""});
  set.validate();
  return set;
}

void LabelPromptSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write label prompts " + path.string());
  out << "# class_id\tclass_name\ttemplate\tdescription\n";
  for (const auto& c : classes) out << c.class_id << '\t' << c.name << '\t' << c.tmpl << '\t' << c.description << '\n';
}

std::vector<std::string> LabelPromptSet::sentences() const {
  std::vector<std::string> out;
  for (const auto& c : classes) out.push_back(c.sentence());
  return out;
}

void LabelPromptSet::embed(const TextEncoder& text) {
  validate();
  embeddings = encode_texts(text, sentences());
}

ZeroShotResult zero_shot_classify(std::span<const double> h, const Matrix& label_embeddings) {
  if (label_embeddings.rows() == 0) throw ValidationError("zero-shot classification needs at least one label");
  if (h.size() != label_embeddings.cols())
    throw ShapeError("embedding width " + std::to_string(h.size()) + " vs label width " +
                     std::to_string(label_embeddings.cols()));
  double hn = 0.0;
  for (double v : h) hn += v * v;
  hn = std::sqrt(hn);
  ZeroShotResult r;
  r.scores.resize(label_embeddings.rows());
  for (std::size_t k = 0; k < label_embeddings.rows(); ++k) {
    const auto u = label_embeddings.row_span(k);
    double d = 0.0, un = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      d += h[j] * u[j];
      un += u[j] * u[j];
    }
    const double denom = hn * std::sqrt(un);
    r.scores[k] = denom > 0.0 ? d / denom : 0.0;
    if (r.scores[k] > r.scores[static_cast<std::size_t>(r.label)]) r.label = static_cast<int>(k);
  }
  return r;
}

double link_score(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("link_score: embedding widths differ");
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? std::clamp(d / denom, -1.0, 1.0) : 0.0;
}

double auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("auc: scores and truth differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the midrank sum keeps every quantity an integer.
  std::uint64_t rank2_sum = 0, n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const std::uint64_t rank2 = static_cast<std::uint64_t>(i + 1 + j);  // 2 × midrank of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (positive[idx[k]]) {
        rank2_sum += rank2;
        ++n_pos;
      }
    i = j;
  }
  const std::uint64_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("auc needs at least one positive and one negative");
  // 2U = Σ 2·rank − n_pos(n_pos + 1)
  const std::uint64_t u2 = rank2_sum - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricReport MetricReport::from(std::vector<double> values) {
  MetricReport r;
  r.per_seed = std::move(values);
  if (r.per_seed.empty()) return r;
  const double n = static_cast<double>(r.per_seed.size());
  r.mean = std::accumulate(r.per_seed.begin(), r.per_seed.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : r.per_seed) ss += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(ss / n);
  return r;
}

namespace {

void shuffle_portable(std::vector<NodeId>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)), i - 1);
    std::swap(v[i - 1], v[j]);
  }
}

std::vector<NodeId> labeled_nodes(const TextAttributedGraph& g) {
  if (!g.has_labels()) throw ValidationError("target graph has no labels");
  std::vector<NodeId> out;
  for (std::size_t v = 0; v < g.num_nodes(); ++v)
    if (g.labels()[v]) out.push_back(static_cast<NodeId>(v));
  return out;
}

Matrix broadcast_rows(const Matrix& row, std::size_t n) {
  Matrix out(n, row.cols());
  for (std::size_t i = 0; i < n; ++i) std::copy(row.values().begin(), row.values().end(), out.row_span(i).begin());
  return out;
}

void check_labels_covered(const TextAttributedGraph& g, std::span<const NodeId> nodes, const LabelPromptSet& labels) {
  for (NodeId v : nodes) {
    const auto& y = g.labels().at(v);
    if (!y) throw ValidationError("node " + std::to_string(v) + " has no label");
    if (*y < 0 || static_cast<std::size_t>(*y) >= labels.size())
      throw ValidationError("class " + std::to_string(*y) + " of node " + std::to_string(v) +
                            " is absent from the label prompt set");
  }
}

}  // namespace

std::vector<NodeId> sample_test_nodes(const TextAttributedGraph& g, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("test fraction must be in (0, 1]");
  auto nodes = labeled_nodes(g);
  if (nodes.empty()) throw ValidationError("target graph has no labeled nodes");
  std::mt19937_64 rng(mix_seed(seed));
  shuffle_portable(nodes, rng);
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * nodes.size())));
  nodes.resize(std::min(k, nodes.size()));
  std::sort(nodes.begin(), nodes.end());
  return nodes;
}

Matrix embed_nodes(const ParamStore& params, const TextAttributedGraph& g, std::span<const NodeId> nodes,
                   const SamplerConfig& sampler, const Matrix* sigma) {
  const std::size_t d = params.config().text_dim;
  if (sigma) require_shape(*sigma, 1, d, "prompt vector");
  Matrix out(nodes.size(), d);
  const auto n = static_cast<std::ptrdiff_t>(nodes.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const EgoSubgraph sub = make_ego_subgraph(g, nodes[k], sampler, params.config().pe_dim);
    Embedding e;
    if (sigma) {
      const Matrix shift = broadcast_rows(*sigma, sub.size());
      e = encode_graph(params, sub, &shift);
    } else {
      e = encode_graph(params, sub);
    }
    std::copy(e.values.begin(), e.values.end(), out.row_span(k).begin());
  }
  return out;
}

double classification_accuracy(const ParamStore& params, const TextAttributedGraph& g, std::span<const NodeId> nodes,
                               const LabelPromptSet& labels, const SamplerConfig& sampler, const Matrix* sigma) {
  if (labels.embeddings.empty()) throw ValidationError("label prompts are not embedded");
  if (nodes.empty()) throw ValidationError("no evaluation nodes");
  check_labels_covered(g, nodes, labels);
  const Matrix h = embed_nodes(params, g, nodes, sampler, sigma);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (zero_shot_classify(h.row_span(i), labels.embeddings).label == *g.labels()[nodes[i]]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

MetricReport evaluate_node_classification(const ParamStore& params, const TextAttributedGraph& g,
                                          const LabelPromptSet& labels, const EvalConfig& cfg) {
  if (cfg.runs == 0) throw ValidationError("evaluation needs at least one run");
  std::vector<double> acc;
  for (std::size_t run = 0; run < cfg.runs; ++run) {
    const auto test = sample_test_nodes(g, cfg.test_fraction, cfg.seed + run);
    acc.push_back(classification_accuracy(params, g, test, labels, cfg.sampler));
  }
  return MetricReport::from(std::move(acc));
}

MetricReport evaluate_link_prediction(const ParamStore& params, const TextAttributedGraph& g,
                                      const LinkEvalConfig& cfg) {
  if (cfg.runs == 0) throw ValidationError("evaluation needs at least one run");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction <= 1.0)) throw ValidationError("test fraction must be in (0, 1]");
  const auto& edges = g.edges();
  const std::size_t n = g.num_nodes();
  if (edges.empty()) throw ValidationError("link prediction needs at least one edge");
  if (edges.size() >= n * (n - 1) / 2) throw ValidationError("complete graph has no non-edges to sample");
  const std::size_t pe = params.config().pe_dim;

  std::vector<double> aucs;
  for (std::size_t run = 0; run < cfg.runs; ++run) {
    std::mt19937_64 rng(mix_seed(cfg.seed + run) ^ 0x6c696e6bULL);
    std::vector<std::size_t> order(edges.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::min(static_cast<std::size_t>(uniform01(rng) * i), i - 1)]);
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.test_fraction * edges.size())));
    order.resize(std::min(k, order.size()));

    std::vector<Edge> pairs;
    std::vector<bool> truth;
    for (std::size_t i : order) {
      pairs.push_back(edges[i]);
      truth.push_back(true);
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (;;) {
        const auto a = static_cast<NodeId>(std::min(static_cast<std::size_t>(uniform01(rng) * n), n - 1));
        const auto b = static_cast<NodeId>(std::min(static_cast<std::size_t>(uniform01(rng) * n), n - 1));
        if (a == b || g.has_edge(a, b)) continue;
        pairs.emplace_back(std::min(a, b), std::max(a, b));
        truth.push_back(false);
        break;
      }
    }
    std::vector<double> scores(pairs.size());
    const auto np = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < np; ++i) {
      const auto k2 = static_cast<std::size_t>(i);
      const auto [a, b] = pairs[k2];
      std::optional<Edge> mask;
      if (truth[k2]) mask = pairs[k2];
      const auto ea = encode_graph(params, make_ego_subgraph(g, a, cfg.sampler, pe, mask));
      const auto eb = encode_graph(params, make_ego_subgraph(g, b, cfg.sampler, pe, mask));
      scores[k2] = link_score(ea.values, eb.values);
    }
    aucs.push_back(auc(scores, truth));
  }
  return MetricReport::from(std::move(aucs));
}

std::vector<NodeId> FewShotSplit::train_nodes() const {
  std::vector<NodeId> out;
  for (const auto& c : train) out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<int> FewShotSplit::train_labels() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < train.size(); ++c) out.insert(out.end(), train[c].size(), static_cast<int>(c));
  return out;
}

void FewShotSplit::validate() const {
  if (shots == 0) throw ValidationError("few-shot split needs shots >= 1");
  std::set<NodeId> seen;
  for (std::size_t c = 0; c < train.size(); ++c) {
    if (train[c].size() != shots)
      throw ValidationError("class " + std::to_string(c) + " has " + std::to_string(train[c].size()) +
                            " training nodes, expected " + std::to_string(shots));
    for (NodeId v : train[c])
      if (!seen.insert(v).second) throw ValidationError("node " + std::to_string(v) + " appears twice in train");
  }
  for (NodeId v : test)
    if (seen.count(v)) throw ValidationError("node " + std::to_string(v) + " is in both train and test");
}

FewShotSplit make_few_shot_split(const TextAttributedGraph& g, std::size_t shots, std::uint64_t seed) {
  if (shots == 0) throw ValidationError("shots must be >= 1; use zero-shot evaluation for 0 shots");
  const std::size_t classes = g.num_classes();
  std::vector<std::vector<NodeId>> by_class(classes);
  for (NodeId v : labeled_nodes(g)) by_class.at(static_cast<std::size_t>(*g.labels()[v])).push_back(v);
  FewShotSplit split;
  split.shots = shots;
  split.seed = seed;
  std::mt19937_64 rng(mix_seed(seed) ^ 0x73686f74ULL);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& nodes = by_class[c];
    if (nodes.size() <= shots)
      throw ValidationError("class " + std::to_string(c) + " has " + std::to_string(nodes.size()) +
                            " labeled nodes; need more than " + std::to_string(shots));
    shuffle_portable(nodes, rng);
    split.train.emplace_back(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(shots));
    split.test.insert(split.test.end(), nodes.begin() + static_cast<std::ptrdiff_t>(shots), nodes.end());
  }
  std::sort(split.test.begin(), split.test.end());
  split.validate();
  return split;
}

LossWithGrad prompt_loss(const ParamStore& params, std::span<const EgoSubgraph> subs, const std::vector<int>& labels,
                         const Matrix& class_sentences, const Matrix& sigma, double temperature,
                         bool graph_pairs) {
  const std::size_t d = params.config().text_dim;
  require_shape(sigma, 1, d, "prompt vector");
  if (subs.size() != labels.size()) throw ShapeError("prompt_loss: one label per subgraph required");
  const std::size_t b = subs.size();
  std::vector<GraphForward> fwds(b);
  Matrix h(b, d);
  const auto nb = static_cast<std::ptrdiff_t>(b);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < nb; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Matrix shift = broadcast_rows(sigma, subs[k].size());
    fwds[k] = forward_graph(params, subs[k], &shift, {.param_grads = false, .input_grad = true});
    const Matrix& out = fwds[k].tape.value(fwds[k].output);
    std::copy(out.values().begin(), out.values().end(), h.row_span(k).begin());
  }
  const auto loss = supervised_contrastive_loss(h, labels, class_sentences, temperature, graph_pairs);
  std::vector<Matrix> row_grads(b);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < nb; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Matrix gx = backward_graph(fwds[k], Matrix::row(loss.grad.row_span(k)), nullptr);
    Matrix g(1, d);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c) g(0, c) += gx(r, c);
    row_grads[k] = std::move(g);
    fwds[k] = GraphForward{};
  }
  LossWithGrad out;
  out.value = loss.value;
  out.grad = Matrix(1, d);
  for (const auto& g : row_grads) out.grad += g;
  return out;
}

PromptTuneResult prompt_tune(const ParamStore& params, const TextAttributedGraph& g, const FewShotSplit& split,
                             const LabelPromptSet& labels, const PromptTuneConfig& cfg) {
  split.validate();
  if (labels.embeddings.empty()) throw ValidationError("label prompts are not embedded");
  const auto nodes = split.train_nodes();
  const auto y = split.train_labels();
  check_labels_covered(g, nodes, labels);
  std::vector<EgoSubgraph> subs;
  for (NodeId v : nodes) subs.push_back(make_ego_subgraph(g, v, cfg.sampler, params.config().pe_dim));

  const std::size_t d = params.config().text_dim;
  PromptTuneResult res;
  res.sigma = Matrix(1, d);
  AdamW opt(std::vector<std::pair<std::size_t, std::size_t>>{{1, d}}, cfg.optimizer);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto loss = prompt_loss(params, subs, y, labels.embeddings, res.sigma, cfg.temperature, cfg.graph_pairs);
    if (!std::isfinite(loss.value)) throw NumericError("prompt tuning loss became non-finite at epoch " +
                                                       std::to_string(epoch));
    res.losses.push_back(loss.value);
    opt.step(res.sigma, loss.grad, 0);
  }
  return res;
}

}  // namespace graphclip
