#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "graphclip/errors.hpp"
#include "graphclip/graph.hpp"
#include "graphclip/graphml.hpp"

namespace graphclip {

struct GraphSummaryPair {
  std::string source_graph;
  NodeId seed = 0;
  std::uint64_t sampler_seed = 0;  // SamplerConfig::rng_seed used to draw the subgraph
  Domain domain = Domain::Academic;
  std::string summary;
  std::size_t token_count = 0;

  void validate() const;
  std::string key() const;  // identity used for resume and dedup
  bool operator==(const GraphSummaryPair&) const = default;
};

std::size_t whitespace_token_count(std::string_view s);

// Line-delimited JSON, one pair per line.
std::string pair_to_json_line(const GraphSummaryPair& p);
std::vector<GraphSummaryPair> parse_pairs(std::istream& in);
std::vector<GraphSummaryPair> read_pairs(const std::filesystem::path& path);  // missing file → empty
void write_pairs(const std::vector<GraphSummaryPair>& pairs, const std::filesystem::path& path);

// Append-only sink; appends from several threads are serialized and each
// line is flushed whole.
class DatasetSink {
 public:
  explicit DatasetSink(std::filesystem::path path);
  void append(const GraphSummaryPair& p);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

// Raised by clients for failed requests; generate_pairs retries these.
class LlmError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "llm"; }
};

struct LlmClientConfig {
  std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "Qwen2-72B-Instruct";
  std::size_t max_tokens = 500;
  double timeout_seconds = 120.0;
  int retries = 2;
  double requests_per_second = 0.0;  // 0 disables the limiter
  std::string api_key_env = "GRAPHCLIP_LLM_API_KEY";

  void validate() const;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Offline client: the reply lists the unescaped d0 values of the GraphML in
// the prompt, seed node first. `fail` may reject a prompt to simulate errors.
class MockLlmClient final : public LlmClient {
 public:
  using FailurePredicate = std::function<bool(const std::string& prompt)>;
  explicit MockLlmClient(FailurePredicate fail = {}) : fail_(std::move(fail)) {}
  std::string complete(const std::string& prompt) override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  FailurePredicate fail_;
  std::atomic<std::size_t> calls_{0};
};

// OpenAI-style chat-completions endpoint. The bearer token is read from the
// environment variable named in the config (no header when unset).
class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(LlmClientConfig cfg);
  std::string complete(const std::string& prompt) override;

 private:
  LlmClientConfig cfg_;
  std::string origin_, path_;
  std::mutex rate_mu_;
  std::chrono::steady_clock::time_point next_slot_{};
};

// Unescapes the five predefined XML entities and numeric references.
std::string xml_unescape(std::string_view s);

struct GenerationConfig {
  std::string source_graph = "source";
  Domain domain = Domain::Academic;
  GraphMLSchema schema = GraphMLSchema::for_domain(Domain::Academic);
  SamplerConfig sampler;
  std::size_t text_budget = 2000;  // bytes per node attribute before insertion
  int retries = 2;
  std::size_t max_in_flight = 1;
  std::filesystem::path prompt_dir;  // empty → asset_dir()
};

struct GenerationReport {
  std::size_t generated = 0;
  std::size_t skipped_existing = 0;
  std::size_t failed = 0;
  std::size_t duplicate_seeds = 0;
};

// One request per seed not already present in `dataset`. Requests that still
// fail after the retries are written to `failure_manifest` and skipped.
// Pairs are appended in seed order.
GenerationReport generate_pairs(const TextAttributedGraph& graph, const std::vector<NodeId>& seeds,
                                const GenerationConfig& cfg, LlmClient& client,
                                const std::filesystem::path& dataset,
                                const std::filesystem::path& failure_manifest);

}  // namespace graphclip
