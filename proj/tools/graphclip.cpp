// graphclip command-line driver. Every run writes resolved_config.json,
// manifest.json (input checksums) and a report under --out.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>

#include "graphclip/adapt.hpp"
#include "graphclip/config.hpp"
#include "graphclip/corpus.hpp"
#include "graphclip/gradcheck.hpp"
#include "graphclip/graph.hpp"
#include "graphclip/pretrain.hpp"
#include "graphclip/synthetic.hpp"
#include "graphclip/theory.hpp"

namespace fs = std::filesystem;
using namespace graphclip;

namespace {

constexpr int kExitGate = 4;

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char b[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

void write_json(const fs::path& p, const Json& j) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw UsageError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

Json metric_json(const MetricReport& m) {
  return Json{{"mean", m.mean}, {"stddev", m.stddev}, {"per_seed", m.per_seed}};
}

// State shared by all subcommands of one invocation.
struct Run {
  std::string command;
  Json cfg;
  fs::path out;
  Json inputs = Json::array();
  Json outputs = Json::array();

  std::string path(const char* key) const { return cfg.at("paths").at(key).get<std::string>(); }

  fs::path input(const char* key) {
    const auto p = path(key);
    if (p.empty()) throw UsageError(std::string("missing --paths.") + key);
    if (!fs::exists(p)) throw UsageError("input not found: " + p);
    inputs.push_back(Json{{"key", key}, {"path", p}, {"sha256", sha256_file(p)}});
    return p;
  }
  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
  void report(const Json& j) { write_json(output("report.json"), j); }

  void finish() {
    write_json(out / "manifest.json",
               Json{{"command", command}, {"inputs", inputs}, {"outputs", outputs}});
  }
};

TextAttributedGraph load_with_features(const fs::path& p, const TextEncoder& text) {
  auto g = load_graph(p);
  synthetic::attach_text_features(g, text);
  return g;
}

ParamStore load_checkpoint(Run& r, const TextEncoder& text) {
  auto params = ParamStore::load(r.input("checkpoint"));
  if (params.config().text_dim != text.dim())
    throw ShapeError("checkpoint text_dim " + std::to_string(params.config().text_dim) + " != text.dim " +
                     std::to_string(text.dim()));
  return params;
}

// Target graph defaults to paths.graph when paths.target_graph is unset.
fs::path target_graph(Run& r) { return r.path("target_graph").empty() ? r.input("graph") : r.input("target_graph"); }

LabelPromptSet load_labels(Run& r, const TextEncoder& text) {
  auto labels = LabelPromptSet::load(r.input("labels"));
  labels.embed(text);
  return labels;
}

int cmd_fixture(Run& r) {
  const auto& f = r.cfg.at("fixture");
  synthetic::GraphConfig sc;
  sc.nodes = f.at("nodes").get<std::size_t>();
  sc.seed = f.at("seed").get<std::uint64_t>();
  const auto source = synthetic::make_graph(sc);
  synthetic::GraphConfig tc;
  tc.nodes = f.at("target_nodes").get<std::size_t>();
  tc.seed = f.at("target_seed").get<std::uint64_t>();
  const auto target = synthetic::make_graph(tc);

  save_graph(source, r.output("source.tsv"));
  save_graph(target, r.output("target.tsv"));
  const auto sampler = sampler_config(r.cfg);
  const auto pairs = synthetic::make_summaries(source, r.cfg.at("corpus").at("source_graph").get<std::string>(),
                                               sampler.rng_seed, r.cfg.at("seed").get<std::uint64_t>() + 3);
  write_pairs(pairs, r.output("pairs.jsonl"));
  synthetic::label_prompts().save(r.output("labels.tsv"));
  r.report(Json{{"source_nodes", source.num_nodes()},
                {"source_edges", source.edges().size()},
                {"target_nodes", target.num_nodes()},
                {"target_edges", target.edges().size()},
                {"pairs", pairs.size()}});
  return 0;
}

std::vector<NodeId> read_seeds(Run& r, const TextAttributedGraph& g) {
  std::vector<NodeId> seeds;
  if (r.path("seeds").empty()) {
    for (NodeId v = 0; v < g.num_nodes(); ++v) seeds.push_back(v);
  } else {
    std::ifstream in(r.input("seeds"));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::size_t pos = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(line, &pos);
      } catch (const std::exception&) {
        throw ParseError("seed list: expected a node id", lineno);
      }
      if (pos != line.size()) throw ParseError("seed list: trailing characters", lineno);
      if (v >= g.num_nodes()) throw ValidationError("seed " + std::to_string(v) + " out of range");
      seeds.push_back(static_cast<NodeId>(v));
    }
  }
  const auto cap = r.cfg.at("corpus").at("max_seeds").get<std::size_t>();
  if (cap > 0 && seeds.size() > cap) seeds.resize(cap);
  return seeds;
}

int cmd_sample(Run& r) {
  const auto g = load_graph(r.input("graph"));
  const auto sampler = sampler_config(r.cfg);
  const auto pe = r.cfg.at("encoder").at("pe_dim").get<std::size_t>();
  Json subs = Json::array();
  std::ofstream out(r.output("subgraphs.jsonl"), std::ios::binary);
  for (const auto seed : read_seeds(r, g)) {
    const auto sub = rwr_sample(g, seed, sampler);
    const auto pos = rwpe(sub, pe);
    Json edges = Json::array();
    for (const auto& [u, v] : sub.edges) edges.push_back({u, v});
    Json enc = Json::array();
    for (std::size_t i = 0; i < pos.rows(); ++i) {
      std::vector<double> row(pos.cols());
      for (std::size_t k = 0; k < pos.cols(); ++k) row[k] = pos(i, k);
      enc.push_back(row);
    }
    out << Json{{"seed", seed}, {"nodes", sub.global_ids}, {"edges", edges}, {"rwpe", enc}}.dump() << '\n';
    subs.push_back(sub.size());
  }
  r.report(Json{{"subgraphs", subs.size()}, {"sizes", subs}});
  return 0;
}

int cmd_gen_corpus(Run& r) {
  const auto g = load_graph(r.input("graph"));
  const auto& c = r.cfg.at("corpus");
  GenerationConfig gc;
  gc.source_graph = c.at("source_graph").get<std::string>();
  gc.domain = domain_from_string(c.at("domain").get<std::string>());
  gc.schema = GraphMLSchema::for_domain(gc.domain);
  gc.sampler = sampler_config(r.cfg);
  gc.text_budget = c.at("text_budget").get<std::size_t>();
  gc.max_in_flight = c.at("max_in_flight").get<std::size_t>();
  const auto llm = llm_config(r.cfg);
  gc.retries = llm.retries;

  std::unique_ptr<LlmClient> client;
  const auto kind = c.at("client").get<std::string>();
  if (kind == "mock") client = std::make_unique<MockLlmClient>();
  else if (kind == "http") client = std::make_unique<HttpLlmClient>(llm);
  else throw ValidationError("corpus.client must be mock or http");

  // Re-running into the same --out resumes the dataset.
  const auto seeds = read_seeds(r, g);
  const auto rep = generate_pairs(g, seeds, gc, *client, r.output("pairs.jsonl"), r.output("failures.jsonl"));
  r.report(Json{{"seeds", seeds.size()},
                {"generated", rep.generated},
                {"skipped_existing", rep.skipped_existing},
                {"failed", rep.failed},
                {"duplicate_seeds", rep.duplicate_seeds}});
  return 0;
}

int cmd_pretrain(Run& r) {
  const auto text = make_text_encoder(r.cfg);
  auto enc = encoder_config(r.cfg);
  if (enc.text_dim != text->dim())
    throw ShapeError("encoder text_dim " + std::to_string(enc.text_dim) + " != text.dim " +
                     std::to_string(text->dim()));
  const auto g = load_with_features(r.input("graph"), *text);
  const auto pairs = read_pairs(r.input("dataset"));
  std::map<std::string, const TextAttributedGraph*> graphs{
      {r.cfg.at("corpus").at("source_graph").get<std::string>(), &g}};
  const auto data = build_training_set(pairs, graphs, sampler_config(r.cfg), *text, enc.pe_dim);

  auto pc = pretrain_config(r.cfg);
  pc.output_dir = r.out;
  r.outputs.push_back("checkpoint.bin");
  r.outputs.push_back("metrics.csv");
  const auto res = pretrain(data, enc, pc);
  r.report(Json{{"examples", data.size()},
                {"steps", res.metrics.size()},
                {"parameters", res.params.parameter_count()},
                {"initial_eval_loss", res.initial_eval_loss},
                {"final_eval_loss", res.final_eval_loss},
                {"checksum", res.params.checksum()}});
  return 0;
}

// Few-shot accuracy over adapt.runs splits; each split tunes its own σ.
MetricReport few_shot_accuracy(const ParamStore& params, const TextAttributedGraph& g, const LabelPromptSet& labels,
                               const Json& cfg, std::size_t shots) {
  const auto tc = prompt_tune_config(cfg);
  const auto ec = eval_config(cfg);
  std::vector<double> acc;
  for (std::size_t run = 0; run < ec.runs; ++run) {
    const auto split = make_few_shot_split(g, shots, mix_seed(ec.seed + run));
    const auto tuned = prompt_tune(params, g, split, labels, tc);
    acc.push_back(classification_accuracy(params, g, split.test, labels, ec.sampler, &tuned.sigma));
  }
  return MetricReport::from(std::move(acc));
}

int cmd_eval_nc(Run& r) {
  const auto text = make_text_encoder(r.cfg);
  const auto params = load_checkpoint(r, *text);
  const auto g = load_with_features(target_graph(r), *text);
  const auto labels = load_labels(r, *text);
  const auto shots = r.cfg.at("adapt").at("shots").get<std::size_t>();
  const auto m = shots == 0 ? evaluate_node_classification(params, g, labels, eval_config(r.cfg))
                            : few_shot_accuracy(params, g, labels, r.cfg, shots);
  Json j{{"task", "node_classification"}, {"shots", shots}, {"accuracy", metric_json(m)}};
  r.report(j);
  std::cout << "accuracy " << m.mean << " +- " << m.stddev << '\n';
  return 0;
}

int cmd_eval_lp(Run& r) {
  const auto text = make_text_encoder(r.cfg);
  const auto params = load_checkpoint(r, *text);
  const auto g = load_with_features(target_graph(r), *text);
  const auto m = evaluate_link_prediction(params, g, link_eval_config(r.cfg));
  r.report(Json{{"task", "link_prediction"}, {"auc", metric_json(m)}});
  std::cout << "auc " << m.mean << " +- " << m.stddev << '\n';
  return 0;
}

int cmd_tune(Run& r) {
  const auto text = make_text_encoder(r.cfg);
  const auto params = load_checkpoint(r, *text);
  const auto g = load_with_features(target_graph(r), *text);
  const auto labels = load_labels(r, *text);
  auto shots = r.cfg.at("adapt").at("shots").get<std::size_t>();
  if (shots == 0) throw UsageError("tune needs --shots >= 1");
  const auto ec = eval_config(r.cfg);
  const auto split = make_few_shot_split(g, shots, mix_seed(ec.seed));
  const auto res = prompt_tune(params, g, split, labels, prompt_tune_config(r.cfg));
  const auto zero = classification_accuracy(params, g, split.test, labels, ec.sampler);
  const auto tuned = classification_accuracy(params, g, split.test, labels, ec.sampler, &res.sigma);

  std::ofstream s(r.output("sigma.txt"));
  s.precision(17);
  for (std::size_t j = 0; j < res.sigma.cols(); ++j) s << (j ? " " : "") << res.sigma(0, j);
  s << '\n';
  r.report(Json{{"shots", shots},
                {"test_nodes", split.test.size()},
                {"zero_shot_accuracy", zero},
                {"tuned_accuracy", tuned},
                {"losses", res.losses}});
  std::cout << "zero-shot " << zero << " tuned " << tuned << '\n';
  return 0;
}

Json estimate(const theory::McEstimate& e) { return Json{{"mean", e.mean}, {"stderr", e.stderr_}}; }

int cmd_theory(Run& r) {
  const auto& t = r.cfg.at("theory");
  const auto seed = r.cfg.at("seed").get<std::uint64_t>();
  const auto prop = theory::verify_proposition(t.at("zeta").get<double>(), t.at("samples").get<std::size_t>(), seed);
  const auto thm = theory::verify_theorem_bound(theorem_config(r.cfg));
  Json points = Json::array();
  for (const auto& p : thm.points)
    points.push_back(Json{{"t", p.t}, {"w", p.c.w}, {"b", p.c.b}, {"lhs", p.lhs}, {"bound", p.bound},
                          {"violated", p.violated}});
  r.report(Json{{"proposition",
                 {{"zeta", prop.zeta}, {"t", prop.t}, {"alignment", estimate(prop.alignment)},
                  {"risk_m0", estimate(prop.risk_m0)}, {"risk_m1", estimate(prop.risk_m1)},
                  {"gap", prop.gap}, {"passed", prop.passed}}},
                {"theorem", {{"kappa", thm.kappa}, {"violations", thm.violations}, {"passed", thm.passed},
                             {"points", points}}}});
  std::cout << prop.to_text() << thm.to_text();
  return prop.passed && thm.passed ? 0 : kExitGate;
}

int cmd_grad_check(Run& r) {
  const auto rep = grad_check(gradcheck_options(r.cfg));
  Json tensors = Json::array();
  for (const auto& t : rep.tensors)
    tensors.push_back(Json{{"name", t.name}, {"entries", t.entries}, {"rel_error", t.rel_error},
                           {"max_abs_error", t.max_abs_error}, {"passed", t.passed}});
  r.report(Json{{"passed", rep.passed}, {"worst_rel_error", rep.worst_rel_error}, {"tensors", tensors}});
  std::cout << rep.to_text();
  return rep.passed ? 0 : kExitGate;
}

int exit_code(const Error& e) {
  const std::string k = e.kind();
  if (k == "usage") return 2;
  if (k == "parse" || k == "validation" || k == "shape") return 3;
  return 1;
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

// Collects "--a.b value" and "--a.b=value" pairs left over by CLI11.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extra) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extra.size(); ++i) {
    const auto& a = extra[i];
    if (a.rfind("--", 0) != 0) throw UsageError("unexpected argument " + a);
    auto key = a.substr(2);
    if (const auto eq = key.find('='); eq != std::string::npos) {
      out.emplace_back(key.substr(0, eq), key.substr(eq + 1));
      continue;
    }
    if (i + 1 >= extra.size()) throw UsageError("missing value for --" + key);
    out.emplace_back(key, extra[++i]);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph-text contrastive pretraining and transfer toolkit"};
  app.require_subcommand(1);
  app.allow_extras();
  std::string config_file, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> zeta;
  std::optional<std::size_t> shots;
  app.add_option("--config", config_file, "JSON config file");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "global seed");

  using Handler = int (*)(Run&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands{
      {"fixture", "write the synthetic source/target graphs, pairs and labels", cmd_fixture},
      {"sample", "sample ego-subgraphs with RWPE", cmd_sample},
      {"gen-corpus", "generate graph-summary pairs", cmd_gen_corpus},
      {"pretrain", "contrastive pretraining", cmd_pretrain},
      {"eval-nc", "node classification (zero-shot or few-shot)", cmd_eval_nc},
      {"eval-lp", "link prediction AUC", cmd_eval_lp},
      {"tune", "prompt tuning on one few-shot split", cmd_tune},
      {"theory", "Monte-Carlo checks of the alignment results", cmd_theory},
      {"grad-check", "finite-difference gradient check", cmd_grad_check},
  };
  std::map<CLI::App*, Handler> handlers;
  for (const auto& [name, desc, fn] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->allow_extras();
    sub->fallthrough();
    handlers[sub] = fn;
    if (std::string(name) == "theory") sub->add_option("--zeta", zeta, "theory.zeta");
    if (std::string(name) == "eval-nc" || std::string(name) == "tune") sub->add_option("--shots", shots, "adapt.shots");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error kind=usage message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    auto overrides = parse_overrides(app.remaining(true));
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (zeta) {
      std::ostringstream os;
      os.precision(17);
      os << *zeta;
      overrides.emplace_back("theory.zeta", os.str());
    }
    if (shots) overrides.emplace_back("adapt.shots", std::to_string(*shots));
    if (!out_dir.empty()) overrides.emplace_back("output_dir", out_dir);

    Run r;
    r.command = sub->get_name();
    r.cfg = load_config(config_file.empty() ? std::nullopt : std::optional<fs::path>(config_file), overrides);
    r.out = r.cfg.at("output_dir").get<std::string>();
    fs::create_directories(r.out);
    if (!config_file.empty())
      r.inputs.push_back(Json{{"key", "config"}, {"path", config_file}, {"sha256", sha256_file(config_file)}});
    write_json(r.out / "resolved_config.json", r.cfg);
    const int rc = handlers.at(sub)(r);
    r.finish();
    return rc;
  } catch (const Error& e) {
    std::cerr << "error kind=" << e.kind() << " message=\"" << one_line(e.what()) << "\"\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
}
