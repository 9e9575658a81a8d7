#include <doctest.h>

#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "graphclip/corpus.hpp"
#include "graphclip/graphml.hpp"
#include "graphclip/prompts.hpp"

using namespace graphclip;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

// Ring of 12 nodes with unique titles "paper<k>".
TextAttributedGraph ring() {
  std::vector<std::string> text;
  std::vector<Edge> edges;
  for (NodeId v = 0; v < 12; ++v) {
    text.push_back("paper" + std::to_string(v) + " || abstract of " + std::to_string(v));
    edges.emplace_back(v, (v + 1) % 12);
  }
  return TextAttributedGraph(12, edges, text);
}

EgoSubgraph pair_subgraph() {
  EgoSubgraph s;
  s.global_ids = {0, 1};
  s.edges = {{0, 1}};
  return s;
}

}  // namespace

TEST_CASE("emitter matches the golden template byte for byte") {
  const NodeTexts t{{"Sparse Attention for Graphs", "We study attention & message passing on large graphs."},
                    {"Random Walks <revisited>", "Restart probabilities control locality."}};
  const auto doc = emit_graphml(pair_subgraph(), GraphMLSchema::for_domain(Domain::Academic), t);
  CHECK(doc == read_file(std::string(GRAPHCLIP_TEST_DATA) + "/golden_template.graphml"));
}

TEST_CASE("domain schemas") {
  const auto social = GraphMLSchema::for_domain(Domain::Social);
  CHECK(social.node_attr_keys.size() == 1);
  CHECK(social.edge_attr_key.first == "d1");
  CHECK(GraphMLSchema::for_domain(Domain::ECommerce).relation_word == "co-purchased");
  CHECK(domain_from_string("e-commerce") == Domain::ECommerce);
  CHECK(domain_from_string("ecommerce") == Domain::ECommerce);
  CHECK(to_string(Domain::Social) == "social");
  CHECK_THROWS_AS(domain_from_string("legal"), ValidationError);
}

TEST_CASE("escaping covers markup and control whitespace") {
  CHECK(xml_escape("a&b<c>\"d'") == "a&amp;b&lt;c&gt;&quot;d&apos;");
  CHECK(xml_escape("x\ny\tz\r") == "x&#10;y&#9;z&#13;");
  CHECK(xml_unescape(xml_escape("a&b<c>\"d'\n\t")) == "a&b<c>\"d'\n\t");
  CHECK(xml_unescape("&#x41;&#66;") == "AB");
}

TEST_CASE("random GraphML documents round trip") {
  std::mt19937_64 rng(12);
  const std::vector<std::string> pieces{"a", " ", "&", "<", "\n", "'", "é", "||", "  ", "{GraphML}"};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto schema = GraphMLSchema::for_domain(static_cast<Domain>(trial % 3));
    EgoSubgraph sub;
    const std::size_t n = 1 + rng() % 10;
    for (std::size_t v = 0; v < n; ++v) sub.global_ids.push_back(static_cast<NodeId>(v));
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (rng() % 4 == 0) sub.edges.emplace_back(a, b);
    NodeTexts texts(n);
    for (auto& row : texts)
      for (std::size_t k = 0; k < schema.node_attr_keys.size(); ++k) {
        std::string s;
        for (std::size_t i = rng() % 8; i > 0; --i) s += pieces[rng() % pieces.size()];
        row.push_back(s);
      }
    const auto doc = emit_graphml(sub, schema, texts);
    const auto parsed = parse_graphml(doc);
    REQUIRE(parsed.node_texts == texts);
    REQUIRE(parsed.skeleton.edges == sub.edges);
    REQUIRE(parsed.schema.node_attr_keys == schema.node_attr_keys);
    REQUIRE(emit_graphml(parsed.skeleton, parsed.schema, parsed.node_texts) == doc);
  }
}

TEST_CASE("malformed documents are rejected") {
  const auto schema = GraphMLSchema::for_domain(Domain::Academic);
  const auto good = emit_graphml(pair_subgraph(), schema, {{"a", "b"}, {"c", "d"}});
  CHECK_THROWS_AS(parse_graphml(good.substr(0, good.size() / 2)), ParseError);
  auto unknown_key = good;
  unknown_key.replace(unknown_key.find("key=\"d1\""), 8, "key=\"d9\"");
  CHECK_THROWS_AS(parse_graphml(unknown_key), ParseError);
  auto dangling = good;
  dangling.replace(dangling.find("target=\"n1\""), 11, "target=\"n7\"");
  CHECK_THROWS_AS(parse_graphml(dangling), ParseError);
  auto dup = good;
  dup.replace(dup.find("<node id=\"n1\">"), 14, "<node id=\"n0\">");
  CHECK_THROWS_AS(parse_graphml(dup), ParseError);

  try {
    emit_graphml(pair_subgraph(), schema, {{"a", "b"}, {"c"}});
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("n1") != std::string::npos);
    CHECK(msg.find("d1") != std::string::npos);
  }
}

TEST_CASE("node text splitting and truncation") {
  CHECK(split_node_text("T || A", 2) == std::vector<std::string>{"T", "A"});
  CHECK(split_node_text("T", 2) == std::vector<std::string>{"T", ""});
  CHECK(split_node_text("T || A || B", 2) == std::vector<std::string>{"T", "A || B"});
  CHECK(split_node_text("T || A", 1) == std::vector<std::string>{"T || A"});
  CHECK(truncate_text("héllo", 2) == "h");  // 'é' is two bytes
  CHECK(truncate_text("héllo", 3) == "hé");
  CHECK(truncate_text("abc", 0) == "abc");
}

TEST_CASE("prompt assets render without residual placeholders") {
  const auto doc = emit_graphml(pair_subgraph(), GraphMLSchema::for_domain(Domain::Academic), {{"a", "b"}, {"c", "d"}});
  for (auto d : {Domain::Academic, Domain::ECommerce, Domain::Social}) {
    const auto tmpl = load_prompt_template(d);
    CHECK(count_placeholders(tmpl) >= 2);
    const auto prompt = render_summary_prompt(doc, d, 0);
    CHECK(count_placeholders(prompt) == 0);
    CHECK(prompt.find(doc) != std::string::npos);
    CHECK(prompt.find("node `n0'") != std::string::npos);
  }
  CHECK(load_prompt_template(Domain::Social).find("top 50% popular") != std::string::npos);
  // Substituted text is not rescanned.
  CHECK(render_template("{seed}:{GraphML}", 3, "{seed}") == "3:{seed}");
  CHECK_THROWS_AS(load_prompt_template(Domain::Academic, "/nonexistent"), ValidationError);
}

TEST_CASE("dataset lines round trip and errors carry line numbers") {
  GraphSummaryPair p{"cora", 7, 42, Domain::Social, "a \"quoted\"\nsummary", 3};
  std::istringstream in(pair_to_json_line(p) + "\n\n" + pair_to_json_line(p) + "\n");
  const auto got = parse_pairs(in);
  REQUIRE(got.size() == 2);
  CHECK(got[0] == p);
  CHECK(whitespace_token_count("  a b\tc\n") == 3);

  const std::string line = pair_to_json_line(p);
  std::istringstream truncated(line + "\n" + line.substr(0, line.size() / 2) + "\n");
  try {
    parse_pairs(truncated);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  GraphSummaryPair empty = p;
  empty.summary.clear();
  CHECK_THROWS_AS(empty.validate(), ValidationError);

  TempDir dir("graphclip_pairs_test");
  CHECK(read_pairs(dir.path / "missing.jsonl").empty());
  write_pairs({p, p}, dir.path / "x.jsonl");
  CHECK(read_pairs(dir.path / "x.jsonl").size() == 2);
}

TEST_CASE("concurrent sink appends keep whole lines") {
  TempDir dir("graphclip_sink_test");
  DatasetSink sink(dir.path / "d.jsonl");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i)
        sink.append({"g", static_cast<NodeId>(t * 100 + i), 0, Domain::Academic, std::string(200, 'x'), 1});
    });
  for (auto& th : threads) th.join();
  CHECK(read_pairs(dir.path / "d.jsonl").size() == 200);
}

TEST_CASE("generation with a failing seed, then resume") {
  TempDir dir("graphclip_gen_test");
  const auto g = ring();
  GenerationConfig cfg;
  cfg.sampler.node_budget = 4;
  // Fails whenever paper3 is the seed node n0.
  MockLlmClient flaky([](const std::string& prompt) {
    const auto at = prompt.find("<data key=\"d0\">paper3</data>");
    return at != std::string::npos && at < prompt.find("<node id=\"n1\">");
  });
  std::vector<NodeId> first(10);
  std::iota(first.begin(), first.end(), 0);
  const auto rep = generate_pairs(g, first, cfg, flaky, dir.path / "d.jsonl", dir.path / "failures.jsonl");
  CHECK(rep.generated == 9);
  CHECK(rep.failed == 1);
  const auto pairs = read_pairs(dir.path / "d.jsonl");
  REQUIRE(pairs.size() == 9);
  for (std::size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i - 1].seed < pairs[i].seed);
  CHECK(pairs[0].summary.starts_with("Summary: paper0."));
  CHECK(pairs[0].token_count == whitespace_token_count(pairs[0].summary));

  std::ifstream manifest(dir.path / "failures.jsonl");
  std::string line;
  REQUIRE(std::getline(manifest, line));
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("seed") == 3);
  CHECK(j.at("attempts") == cfg.retries + 1);
  CHECK(j.at("error").get<std::string>().find("rejected") != std::string::npos);
  CHECK_FALSE(std::getline(manifest, line));

  // Resume with overlapping seeds, a repeat and the earlier failure.
  MockLlmClient ok;
  const std::vector<NodeId> second{5, 6, 7, 8, 9, 10, 11, 3, 10, 4};
  const auto again = generate_pairs(g, second, cfg, ok, dir.path / "d.jsonl", dir.path / "failures.jsonl");
  CHECK(again.skipped_existing == 6);  // 5..9 and 4
  CHECK(again.duplicate_seeds == 1);
  CHECK(again.generated == 3);         // 10, 11 and the earlier failure 3
  CHECK(read_pairs(dir.path / "d.jsonl").size() == 12);
  CHECK_THROWS_AS(generate_pairs(g, {99}, cfg, ok, dir.path / "d.jsonl", dir.path / "f.jsonl"), ValidationError);
}

TEST_CASE("generation output does not depend on concurrency") {
  TempDir dir("graphclip_gen_par_test");
  const auto g = ring();
  std::vector<NodeId> seeds(12);
  std::iota(seeds.begin(), seeds.end(), 0);
  GenerationConfig cfg;
  MockLlmClient a, b;
  generate_pairs(g, seeds, cfg, a, dir.path / "serial.jsonl", dir.path / "f1.jsonl");
  cfg.max_in_flight = 4;
  generate_pairs(g, seeds, cfg, b, dir.path / "parallel.jsonl", dir.path / "f2.jsonl");
  CHECK(read_file(dir.path / "serial.jsonl") == read_file(dir.path / "parallel.jsonl"));
}

TEST_CASE("HTTP client speaks the chat-completions protocol") {
  httplib::Server server;
  std::string seen_body, seen_auth;
  int calls = 0;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    if (calls == 1) {
      res.status = 503;
      res.set_content("busy", "text/plain");
      return;
    }
    nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "A summary."}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LlmClientConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.timeout_seconds = 5;
  cfg.api_key_env = "GRAPHCLIP_TEST_KEY";
  ::setenv("GRAPHCLIP_TEST_KEY", "secret", 1);
  HttpLlmClient client(cfg);
  CHECK_THROWS_AS(client.complete("hello"), LlmError);
  CHECK(client.complete("hello") == "A summary.");
  const auto body = nlohmann::json::parse(seen_body);
  CHECK(body.at("model") == "Qwen2-72B-Instruct");
  CHECK(body.at("max_tokens") == 500);
  CHECK(body.at("messages").at(0).at("content") == "hello");
  CHECK(seen_auth == "Bearer secret");
  ::unsetenv("GRAPHCLIP_TEST_KEY");

  server.stop();
  th.join();

  LlmClientConfig bad;
  bad.endpoint = "ftp://x";
  CHECK_THROWS_AS(HttpLlmClient{bad}, ValidationError);
}
