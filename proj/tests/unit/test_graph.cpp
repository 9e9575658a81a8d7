#include <doctest.h>

#include <set>
#include <sstream>

#include "graphclip/graph.hpp"
#include "oracles.hpp"

using namespace graphclip;

namespace {

TextAttributedGraph plain_graph(std::size_t n, std::vector<Edge> edges) {
  return TextAttributedGraph(n, std::move(edges), std::vector<std::string>(n, "t"));
}

// Endpoint frequencies of independent 40-step walks; after 40 steps with
// restart 1/2 the start state is forgotten up to 2⁻⁴⁰.
std::vector<double> endpoint_counts(const TextAttributedGraph& g, NodeId seed, std::size_t walks,
                                    std::optional<Edge> masked = std::nullopt) {
  std::vector<double> counts(g.num_nodes(), 0.0);
  for (std::size_t w = 0; w < walks; ++w) {
    RwrWalker walker(g, seed, 0.5, mix_seed(w + 77), masked);
    for (int s = 0; s < 40; ++s) walker.step();
    counts[walker.position()] += 1.0;
  }
  return counts;
}

}  // namespace

TEST_CASE("graph construction normalizes edges") {
  const auto g = plain_graph(4, {{1, 0}, {0, 1}, {2, 2}, {3, 1}});
  CHECK(g.edges() == std::vector<Edge>{{0, 1}, {1, 3}});
  CHECK(g.has_edge(3, 1));
  CHECK_FALSE(g.has_edge(2, 2));
  CHECK(g.neighbors(1) == std::vector<NodeId>{0, 3});
  CHECK_THROWS_AS(plain_graph(2, {{0, 5}}), ValidationError);
  CHECK_THROWS_AS(TextAttributedGraph(2, {}, {"a"}), ValidationError);
}

TEST_CASE("edge-list format round trips and reports line numbers") {
  std::istringstream in("#classes\tx\ty\n3\n2\t1\tthird node\n0\t0\tfirst\n1\t-\tsecond\n\n0\t2\n# comment\n1\t2\n");
  const auto g = parse_graph(in);
  CHECK(g.num_nodes() == 3);
  CHECK(g.raw_text()[2] == "third node");
  CHECK(g.labels()[1] == std::nullopt);
  CHECK(g.labels()[2] == 1);
  CHECK(g.class_names() == std::vector<std::string>{"x", "y"});
  CHECK(g.edges().size() == 2);

  const auto path = std::filesystem::temp_directory_path() / "graphclip_graph_roundtrip.tsv";
  save_graph(g, path);
  const auto h = load_graph(path);
  CHECK(h.edges() == g.edges());
  CHECK(h.raw_text() == g.raw_text());
  CHECK(h.labels() == g.labels());
  CHECK(h.class_names() == g.class_names());
  std::filesystem::remove(path);

  std::istringstream bad("2\n0\t-\ta\n1\t-\tb\n0\tx\n");
  try {
    parse_graph(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  std::istringstream dup("2\n0\t-\ta\n0\t-\tb\n");
  CHECK_THROWS_AS(parse_graph(dup), ValidationError);
  std::istringstream short_nodes("3\n0\t-\ta\n");
  CHECK_THROWS_AS(parse_graph(short_nodes), ParseError);
}

TEST_CASE("sampler puts the seed first, respects the budget and is deterministic") {
  std::vector<Edge> edges;
  for (NodeId v = 0; v + 1 < 30; ++v) edges.emplace_back(v, v + 1);
  for (NodeId v = 0; v + 5 < 30; v += 3) edges.emplace_back(v, v + 5);
  const auto g = plain_graph(30, edges);
  SamplerConfig cfg;
  cfg.node_budget = 8;
  const auto a = rwr_sample(g, 12, cfg);
  CHECK(a.global_ids.front() == 12);
  CHECK(a.center_local_id == 0);
  CHECK(a.size() <= 8);
  CHECK(std::set<NodeId>(a.global_ids.begin(), a.global_ids.end()).size() == a.size());
  a.validate();
  // Induced subgraph: every graph edge between sampled nodes is present.
  std::size_t induced = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (g.has_edge(a.global_ids[i], a.global_ids[j])) ++induced;
  CHECK(induced == a.edges.size());

  const auto b = rwr_sample(g, 12, cfg);
  CHECK(a.global_ids == b.global_ids);
  cfg.rng_seed = 99;
  CHECK(rwr_sample(g, 12, cfg).global_ids.front() == 12);

  SamplerConfig bad;
  bad.restart_prob = 1.0;
  CHECK_THROWS_AS(rwr_sample(g, 0, bad), ValidationError);
}

TEST_CASE("isolated seed yields a single-node subgraph") {
  const auto g = plain_graph(3, {{1, 2}});
  const auto sub = rwr_sample(g, 0, SamplerConfig{});
  CHECK(sub.size() == 1);
  CHECK(sub.edges.empty());
}

TEST_CASE("masked edge is never traversed nor kept") {
  const auto g = plain_graph(3, {{0, 1}, {1, 2}});
  SamplerConfig cfg;
  cfg.node_budget = 3;
  for (std::uint64_t s = 0; s < 50; ++s) {
    cfg.rng_seed = s;
    const auto sub = rwr_sample(g, 0, cfg, Edge{1, 0});
    CHECK(sub.size() == 1);  // node 0's only edge is masked
  }
  // Masked walk matches the walk on the graph without that edge.
  const auto tri = plain_graph(4, {{0, 1}, {1, 2}, {0, 2}, {2, 3}});
  const auto cut = plain_graph(4, {{1, 2}, {0, 2}, {2, 3}});
  const auto counts = endpoint_counts(tri, 0, 20000, Edge{0, 1});
  CHECK(oracle::chi_square_p(counts, oracle::rwr_stationary(cut, 0, 0.5), 20000) > 0.01);
}

TEST_CASE("walk endpoints follow the restart stationary distribution") {
  const std::vector<std::pair<std::size_t, std::vector<Edge>>> graphs{
      {3, {{0, 1}, {1, 2}}},
      {6, {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {3, 4}, {4, 5}}},
      {4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}}},
  };
  for (const auto& [n, edges] : graphs) {
    const auto g = plain_graph(n, edges);
    const auto expect = oracle::rwr_stationary(g, 1, 0.5);
    double total = 0.0;
    for (double p : expect) total += p;
    CHECK(total == doctest::Approx(1.0));
    CHECK(oracle::chi_square_p(endpoint_counts(g, 1, 20000), expect, 20000) > 0.01);
  }
}

TEST_CASE("RWPE on small graphs") {
  EgoSubgraph two;
  two.global_ids = {0, 1};
  two.edges = {{0, 1}};
  const Matrix pe = rwpe(two, 6);
  for (std::size_t v = 0; v < 2; ++v)
    for (std::size_t k = 0; k < 6; ++k) CHECK(pe(v, k) == (k % 2 ? 1.0 : 0.0));

  // Triangle: return probability p₁ = 0, p_k = (1 − p_{k−1}) / 2.
  EgoSubgraph tri;
  tri.global_ids = {0, 1, 2};
  tri.edges = {{0, 1}, {0, 2}, {1, 2}};
  const Matrix pt = rwpe(tri, 5);
  double p = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t v = 0; v < 3; ++v) CHECK(pt(v, k) == doctest::Approx(p).epsilon(1e-14));
    p = (1.0 - p) / 2.0;
  }

  EgoSubgraph iso;
  iso.global_ids = {0, 1, 2};
  iso.edges = {{0, 1}};
  const Matrix pi = rwpe(iso, 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(pi(2, k) == 0.0);
  const Matrix a = iso.mean_adjacency();
  CHECK(a(0, 1) == 1.0);
  CHECK(a(2, 0) + a(2, 1) + a(2, 2) == 0.0);
  CHECK_THROWS_AS(rwpe(two, 0), ValidationError);
}

TEST_CASE("make_ego_subgraph copies features and requires them") {
  auto g = plain_graph(3, {{0, 1}, {1, 2}});
  CHECK_THROWS_AS(make_ego_subgraph(g, 0, SamplerConfig{}, 4), ValidationError);
  g.set_features(Matrix{{1, 0}, {0, 1}, {1, 1}});
  const auto sub = make_ego_subgraph(g, 2, SamplerConfig{}, 4);
  CHECK(sub.features(0, 0) == 1.0);
  CHECK(sub.features(0, 1) == 1.0);
  CHECK(sub.positional.rows() == sub.size());
  CHECK(sub.positional.cols() == 4);
  CHECK_THROWS_AS(g.set_features(Matrix(2, 2)), ValidationError);
}
