#include "graphclip/corpus.hpp"

#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "graphclip/prompts.hpp"

namespace graphclip {

using nlohmann::json;

void GraphSummaryPair::validate() const {
  if (source_graph.empty()) throw ValidationError("pair has empty source_graph");
  if (summary.empty()) throw ValidationError("pair summary is empty");
  if (token_count == 0) throw ValidationError("pair token_count must be > 0");
}

std::string GraphSummaryPair::key() const {
  return source_graph + "#" + std::to_string(seed) + "#" + std::to_string(sampler_seed);
}

std::size_t whitespace_token_count(std::string_view s) {
  std::size_t n = 0;
  bool in = false;
  for (char c : s) {
    const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!ws && !in) ++n;
    in = !ws;
  }
  return n;
}

std::string pair_to_json_line(const GraphSummaryPair& p) {
  json j = {{"source_graph", p.source_graph}, {"seed", p.seed},       {"sampler_seed", p.sampler_seed},
            {"domain", to_string(p.domain)},  {"summary", p.summary}, {"token_count", p.token_count}};
  return j.dump();
}

std::vector<GraphSummaryPair> parse_pairs(std::istream& in) {
  std::vector<GraphSummaryPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw ValidationError("record is not an object");
      for (const char* f : {"source_graph", "seed", "sampler_seed", "domain", "summary", "token_count"})
        if (!j.contains(f)) throw ValidationError(std::string("missing field '") + f + "'");
      GraphSummaryPair p;
      p.source_graph = j.at("source_graph").get<std::string>();
      p.seed = j.at("seed").get<NodeId>();
      p.sampler_seed = j.at("sampler_seed").get<std::uint64_t>();
      p.domain = domain_from_string(j.at("domain").get<std::string>());
      p.summary = j.at("summary").get<std::string>();
      p.token_count = j.at("token_count").get<std::size_t>();
      p.validate();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(std::string("invalid dataset record: ") + e.what(), lineno);
    } catch (const ValidationError& e) {
      throw ParseError(std::string("invalid dataset record: ") + e.what(), lineno);
    }
  }
  return out;
}

std::vector<GraphSummaryPair> read_pairs(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read dataset " + path.string());
  return parse_pairs(in);
}

void write_pairs(const std::vector<GraphSummaryPair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write dataset " + path.string());
  for (const auto& p : pairs) {
    p.validate();
    out << pair_to_json_line(p) << '\n';
  }
}

DatasetSink::DatasetSink(std::filesystem::path path) : path_(std::move(path)) {}

void DatasetSink::append(const GraphSummaryPair& p) {
  p.validate();
  const std::string line = pair_to_json_line(p) + "\n";
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw ValidationError("cannot append to dataset " + path_.string());
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
}

void LlmClientConfig::validate() const {
  if (retries < 0) throw ValidationError("llm retries must be >= 0");
  if (max_tokens == 0) throw ValidationError("llm max_tokens must be > 0");
  if (!(timeout_seconds > 0.0)) throw ValidationError("llm timeout must be > 0");
  if (requests_per_second < 0.0) throw ValidationError("llm rate limit must be >= 0");
  if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0)
    throw ValidationError("llm endpoint must be an http(s) URL: " + endpoint);
}

std::string xml_unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    const auto end = s.find(';', i);
    if (end == std::string_view::npos) {
      out += s[i];
      continue;
    }
    const auto ent = s.substr(i + 1, end - i - 1);
    if (ent == "amp") out += '&';
    else if (ent == "lt") out += '<';
    else if (ent == "gt") out += '>';
    else if (ent == "quot") out += '"';
    else if (ent == "apos") out += '\'';
    else if (!ent.empty() && ent[0] == '#') {
      const bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
      const unsigned long cp = std::stoul(std::string(ent.substr(hex ? 2 : 1)), nullptr, hex ? 16 : 10);
      if (cp < 0x80) {
        out += static_cast<char>(cp);
      } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
      } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
      } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
      }
    } else {
      out += s.substr(i, end - i + 1);
    }
    i = end;
  }
  return out;
}

std::string MockLlmClient::complete(const std::string& prompt) {
  ++calls_;
  if (fail_ && fail_(prompt)) throw LlmError("mock client rejected the request");
  static constexpr std::string_view open = "<data key=\"d0\">";
  std::vector<std::string> titles;
  for (auto pos = prompt.find(open); pos != std::string::npos; pos = prompt.find(open, pos)) {
    pos += open.size();
    const auto end = prompt.find("</data>", pos);
    if (end == std::string::npos) break;
    titles.push_back(xml_unescape(std::string_view(prompt).substr(pos, end - pos)));
    pos = end;
  }
  if (titles.empty()) return "The subgraph has no titled nodes.";
  std::string reply = "Summary: " + titles.front() + ".";
  if (titles.size() > 1) {
    reply += " Neighborhood:";
    for (std::size_t i = 1; i < titles.size(); ++i) reply += (i == 1 ? " " : "; ") + titles[i];
    reply += ".";
  }
  return reply;
}

HttpLlmClient::HttpLlmClient(LlmClientConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto scheme_end = cfg_.endpoint.find("://") + 3;
  const auto slash = cfg_.endpoint.find('/', scheme_end);
  origin_ = cfg_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : cfg_.endpoint.substr(slash);
}

std::string HttpLlmClient::complete(const std::string& prompt) {
  if (cfg_.requests_per_second > 0.0) {
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(rate_mu_);
      const auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_slot_);
      next_slot_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(1.0 / cfg_.requests_per_second));
    }
    std::this_thread::sleep_until(slot);
  }
  httplib::Client cli(origin_);
  const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
  const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  const json body = {{"model", cfg_.model},
                     {"max_tokens", cfg_.max_tokens},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  auto res = cli.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw LlmError("request to " + cfg_.endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw LlmError("llm endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  try {
    const json j = json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw LlmError(std::string("unexpected llm response: ") + e.what());
  }
}

namespace {

struct Outcome {
  std::optional<GraphSummaryPair> pair;
  std::string error;
  int attempts = 0;
};

Outcome generate_one(const TextAttributedGraph& graph, NodeId seed, const GenerationConfig& cfg,
                     const std::string& tmpl, LlmClient& client) {
  Outcome o;
  const EgoSubgraph sub = rwr_sample(graph, seed, cfg.sampler);
  const std::string doc = emit_graphml(sub, cfg.schema, subgraph_node_texts(graph, sub, cfg.schema, cfg.text_budget));
  const std::string prompt = render_template(tmpl, sub.center_local_id, doc);
  for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
    ++o.attempts;
    try {
      std::string summary = client.complete(prompt);
      const std::size_t tokens = whitespace_token_count(summary);
      if (tokens == 0) throw LlmError("empty summary");
      o.pair = GraphSummaryPair{cfg.source_graph, seed, cfg.sampler.rng_seed, cfg.domain, std::move(summary), tokens};
      return o;
    } catch (const LlmError& e) {
      o.error = e.what();
    }
  }
  return o;
}

}  // namespace

GenerationReport generate_pairs(const TextAttributedGraph& graph, const std::vector<NodeId>& seeds,
                                const GenerationConfig& cfg, LlmClient& client,
                                const std::filesystem::path& dataset,
                                const std::filesystem::path& failure_manifest) {
  cfg.schema.validate();
  cfg.sampler.validate();
  if (cfg.retries < 0) throw ValidationError("retries must be >= 0");
  const std::string tmpl =
      load_prompt_template(cfg.domain, cfg.prompt_dir.empty() ? asset_dir() : cfg.prompt_dir);

  GenerationReport report;
  std::set<std::string> present;
  for (const auto& p : read_pairs(dataset)) present.insert(p.key());

  std::vector<NodeId> todo;
  std::set<NodeId> queued;
  for (NodeId s : seeds) {
    if (s >= graph.num_nodes()) throw ValidationError("seed " + std::to_string(s) + " is not a node of the graph");
    GraphSummaryPair probe{cfg.source_graph, s, cfg.sampler.rng_seed, cfg.domain, "", 0};
    if (present.count(probe.key())) {
      ++report.skipped_existing;
    } else if (!queued.insert(s).second) {
      ++report.duplicate_seeds;
    } else {
      todo.push_back(s);
    }
  }

  DatasetSink sink(dataset);
  const std::size_t width = std::max<std::size_t>(1, cfg.max_in_flight);
  for (std::size_t start = 0; start < todo.size(); start += width) {
    const std::size_t end = std::min(todo.size(), start + width);
    std::vector<std::future<Outcome>> inflight;
    for (std::size_t i = start; i < end; ++i)
      inflight.push_back(std::async(width > 1 ? std::launch::async : std::launch::deferred,
                                    [&, s = todo[i]] { return generate_one(graph, s, cfg, tmpl, client); }));
    for (std::size_t i = start; i < end; ++i) {
      Outcome o = inflight[i - start].get();
      if (o.pair) {
        sink.append(*o.pair);
        ++report.generated;
      } else {
        std::ofstream out(failure_manifest, std::ios::app);
        if (!out) throw ValidationError("cannot write failure manifest " + failure_manifest.string());
        out << json{{"source_graph", cfg.source_graph},
                    {"seed", todo[i]},
                    {"sampler_seed", cfg.sampler.rng_seed},
                    {"attempts", o.attempts},
                    {"error", o.error}}
                   .dump()
            << '\n';
        ++report.failed;
      }
    }
  }
  return report;
}

}  // namespace graphclip
