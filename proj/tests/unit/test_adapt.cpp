#include <doctest.h>

#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "fixture.hpp"
#include "graphclip/adapt.hpp"
#include "oracles.hpp"

using namespace graphclip;

namespace {

const fixture::Transfer& transfer() {
  static const fixture::Transfer t = fixture::make_transfer();
  return t;
}

}  // namespace

TEST_CASE("zero-shot picks the most similar label, lowest id on ties") {
  const Matrix labels{{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
  const std::vector<double> h{0.9, 0.1};
  const auto r = zero_shot_classify(h, labels);
  CHECK(r.label == 0);
  CHECK(r.scores[0] == r.scores[2]);
  CHECK(zero_shot_classify(std::vector<double>{-1.0, 3.0}, labels).label == 1);
  // Cosine, not dot: a longer label vector gains nothing.
  CHECK(zero_shot_classify(std::vector<double>{1.0, 1.1}, Matrix{{5.0, 0.0}, {0.0, 1.0}}).label == 1);
  CHECK_THROWS_AS(zero_shot_classify(h, Matrix(0, 2)), ValidationError);
  CHECK_THROWS_AS(zero_shot_classify(std::vector<double>{1.0}, labels), ShapeError);
}

TEST_CASE("AUC worked example and brute-force agreement") {
  // Pairs (p, n): (0.9, 0.8) win, (0.9, 0.1) win, (0.3, 0.8) loss, (0.3, 0.1) win.
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.3, 0.1}, {true, false, true, false}) == 0.75);
  CHECK(auc(std::vector<double>{0.5, 0.5}, {true, false}) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, {true, true}), ValidationError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, {true, false}), ShapeError);

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 50;
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 10);
      pos[i] = rng() % 3 == 0;
    }
    pos[0] = true;
    pos[n - 1] = false;
    REQUIRE(auc(s, pos) == oracle::auc_pairs(s, pos));
  }
}

TEST_CASE("label prompt files") {
  std::istringstream in("# comment\n1\tb\tgood paper of {class} {class_desc}\tabout b\n0\ta\tis {class} category\n");
  const auto set = LabelPromptSet::parse(in);
  REQUIRE(set.size() == 2);
  CHECK(set.classes[0].name == "a");
  CHECK(set.sentences() == std::vector<std::string>{"is a category", "good paper of b about b"});
  CHECK(render_label_sentence("{class} {class_desc}", "x", "") == "x");

  std::istringstream gap("0\ta\t{class}\n2\tc\t{class}\n");
  CHECK_THROWS_AS(LabelPromptSet::parse(gap), ValidationError);
  std::istringstream bad("zero\ta\t{class}\n");
  CHECK_THROWS_AS(LabelPromptSet::parse(bad), ParseError);

  const auto synthetic = LabelPromptSet::load(std::string(GRAPHCLIP_ASSET_DIR) + "/labels/synthetic.tsv");
  CHECK(synthetic.sentences() == synthetic::label_prompts().sentences());
  for (const char* name : {"cora.tsv", "citeseer.tsv"}) {
    const auto real = LabelPromptSet::load(std::string(GRAPHCLIP_ASSET_DIR) + "/labels/" + name);
    CHECK(real.size() >= 6);
  }

  const auto path = std::filesystem::temp_directory_path() / "graphclip_labels.tsv";
  set.save(path);
  CHECK(LabelPromptSet::load(path).sentences() == set.sentences());
  std::filesystem::remove(path);
}

TEST_CASE("few-shot splits") {
  const auto& g = transfer().target;
  const auto split = make_few_shot_split(g, 5, 3);
  CHECK(split.train.size() == 3);
  std::set<NodeId> seen;
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(split.train[c].size() == 5);
    for (NodeId v : split.train[c]) {
      CHECK(*g.labels()[v] == static_cast<int>(c));
      seen.insert(v);
    }
  }
  for (NodeId v : split.test) CHECK(seen.insert(v).second);
  CHECK(seen.size() == g.num_nodes());
  CHECK(split.train_labels().size() == 15);
  CHECK(make_few_shot_split(g, 5, 3).train == split.train);
  CHECK(make_few_shot_split(g, 5, 4).train != split.train);
  CHECK_THROWS_AS(make_few_shot_split(g, 0, 1), ValidationError);
  CHECK_THROWS_AS(make_few_shot_split(g, 100, 1), ValidationError);

  const auto test = sample_test_nodes(g, 0.2, 1);
  CHECK(test.size() == 60);
  CHECK(std::set<NodeId>(test.begin(), test.end()).size() == 60);
}

TEST_CASE("sigma gradient matches central differences") {
  const auto& t = transfer();
  const ParamStore params(t.encoder);
  const auto split = make_few_shot_split(t.target, 2, 0);
  std::vector<EgoSubgraph> subs;
  for (NodeId v : split.train_nodes()) subs.push_back(make_ego_subgraph(t.target, v, t.sampler, t.encoder.pe_dim));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 0.1);
  Matrix sigma(1, t.encoder.text_dim);
  for (auto& x : sigma.values()) x = nd(rng);
  for (bool graph_pairs : {false, true}) {
    const auto l = prompt_loss(params, subs, split.train_labels(), t.labels.embeddings, sigma, 0.1, graph_pairs);
    REQUIRE(l.grad.rows() == 1);
    for (std::size_t c = 0; c < sigma.cols(); ++c) {
      Matrix up = sigma, down = sigma;
      up(0, c) += 1e-6;
      down(0, c) -= 1e-6;
      const double num = (prompt_loss(params, subs, split.train_labels(), t.labels.embeddings, up, 0.1, graph_pairs).value -
                          prompt_loss(params, subs, split.train_labels(), t.labels.embeddings, down, 0.1, graph_pairs).value) /
                         2e-6;
      CHECK(l.grad(0, c) == doctest::Approx(num).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("zero sigma reproduces zero-shot and tuning leaves the towers frozen") {
  const auto& t = transfer();
  const ParamStore params(t.encoder);
  std::vector<NodeId> nodes(40);
  std::iota(nodes.begin(), nodes.end(), 0);
  const Matrix zero(1, t.encoder.text_dim);
  CHECK(embed_nodes(params, t.target, nodes, t.sampler) == embed_nodes(params, t.target, nodes, t.sampler, &zero));

  const auto before = params.checksum();
  const auto text_before = t.text.checksum();
  PromptTuneConfig cfg;
  cfg.epochs = 5;
  cfg.sampler = t.sampler;
  const auto split = make_few_shot_split(t.target, 2, 1);
  const auto res = prompt_tune(params, t.target, split, t.labels, cfg);
  CHECK(res.losses.size() == 5);
  CHECK(res.sigma.rows() == 1);
  CHECK(res.sigma.cols() == t.encoder.text_dim);
  CHECK(frobenius_norm(res.sigma) > 0.0);
  CHECK(params.checksum() == before);
  CHECK(t.text.checksum() == text_before);
}

TEST_CASE("evaluation reports") {
  const auto r = MetricReport::from({0.5, 0.7});
  CHECK(r.mean == doctest::Approx(0.6));
  CHECK(r.stddev == doctest::Approx(0.1));

  const auto& t = transfer();
  const ParamStore params(t.encoder);
  EvalConfig ev;
  ev.sampler = t.sampler;
  ev.runs = 2;
  const auto nc = evaluate_node_classification(params, t.target, t.labels, ev);
  CHECK(nc.per_seed.size() == 2);
  CHECK(nc.mean >= 0.0);
  CHECK(nc.mean <= 1.0);
  CHECK(evaluate_node_classification(params, t.target, t.labels, ev).mean == nc.mean);

  LinkEvalConfig lc;
  lc.sampler = t.sampler;
  lc.runs = 2;
  lc.test_fraction = 0.1;
  const auto lp = evaluate_link_prediction(params, t.target, lc);
  CHECK(lp.per_seed.size() == 2);
  CHECK(lp.mean > 0.0);
  CHECK(lp.mean < 1.0);
  CHECK(link_score(std::vector<double>{1.0, 0.0}, std::vector<double>{2.0, 0.0}) == doctest::Approx(1.0));
}
