#include "graphclip/config.hpp"

#include <fstream>

namespace graphclip {

Json default_config() {
  return Json::parse(R"({
    "seed": 0,
    "output_dir": "run",
    "paths": {
      "graph": "", "target_graph": "", "dataset": "", "failures": "", "checkpoint": "",
      "labels": "", "text_table": "", "seeds": ""
    },
    "text": {"kind": "hash", "dim": 16, "salt": 0},
    "sampler": {"restart_prob": 0.5, "node_budget": 16, "max_steps": 256, "rng_seed": 0},
    "encoder": {
      "preset": "custom", "layers": 2, "hidden": 32, "heads": 4, "pe_dim": 16, "ffn_mult": 2,
      "init_seed": 24301
    },
    "pretrain": {
      "epochs": 30, "batch_size": 32, "temperature": 0.1, "adversary": true,
      "epsilon": 0.01, "steps": 3, "step_size": 0.0, "norm": "l2",
      "lr": 1e-5, "weight_decay": 1e-5
    },
    "corpus": {
      "source_graph": "source", "domain": "academic", "text_budget": 2000, "max_in_flight": 1,
      "client": "mock", "max_seeds": 0
    },
    "llm": {
      "endpoint": "http://127.0.0.1:8000/v1/chat/completions", "model": "Qwen2-72B-Instruct",
      "max_tokens": 500, "timeout_seconds": 120.0, "retries": 2, "requests_per_second": 0.0,
      "api_key_env": "GRAPHCLIP_LLM_API_KEY"
    },
    "adapt": {
      "shots": 0, "test_fraction": 0.2, "runs": 5, "link_test_fraction": 0.5,
      "epochs": 100, "lr": 1e-4, "weight_decay": 1e-5, "temperature": 0.1, "graph_pairs": false
    },
    "theory": {
      "zeta": 0.04, "samples": 1000000, "theorem_samples": 100000, "radius": 6.0, "sigmas": 3.0
    },
    "gradcheck": {
      "trials": 1, "nodes": 3, "batch": 2, "step": 1e-5, "tolerance": 1e-4, "max_entries": 200,
      "temperature": 0.1, "seed": 7, "corrupt": ""
    },
    "fixture": {"nodes": 200, "seed": 1, "target_nodes": 300, "target_seed": 2}
  })");
}

namespace {

bool compatible(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) {
    // Integers may be given where reals are expected, not the reverse.
    return a.is_number_float() || !b.is_number_float();
  }
  return a.type() == b.type();
}

}  // namespace

void merge_config(Json& base, const Json& user, const std::string& prefix) {
  if (!user.is_object()) throw ValidationError("config " + (prefix.empty() ? "root" : prefix) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ValidationError("unknown config key '" + path + "'");
    Json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, path);
    } else {
      if (!compatible(slot, value))
        throw ValidationError("config key '" + path + "' expects " + std::string(slot.type_name()) + ", got " +
                              value.type_name());
      slot = slot.is_number_float() ? Json(value.get<double>()) : value;
    }
  }
}

void apply_override(Json& cfg, const std::string& dotted, const std::string& value) {
  Json* node = &cfg;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw UsageError("unknown config key '" + dotted + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw UsageError("config key '" + dotted + "' is a section, not a value");
  try {
    std::size_t used = 0;
    if (node->is_boolean()) {
      if (value == "true" || value == "1") *node = true;
      else if (value == "false" || value == "0") *node = false;
      else throw std::invalid_argument("bool");
      used = value.size();
    } else if (node->is_number_float()) {
      *node = std::stod(value, &used);
    } else if (node->is_number_unsigned() || node->is_number_integer()) {
      if (!value.empty() && value[0] == '-') *node = std::stoll(value, &used);
      else *node = std::stoull(value, &used);
    } else {
      *node = value;
      used = value.size();
    }
    if (used != value.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw UsageError("cannot parse '" + value + "' for config key '" + dotted + "' (" + node->type_name() + ")");
  }
}

Json load_config(const std::optional<std::filesystem::path>& file,
                 const std::vector<std::pair<std::string, std::string>>& overrides) {
  Json cfg = default_config();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw UsageError("cannot read config file " + file->string());
    Json user;
    try {
      user = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ParseError(std::string("config file ") + file->string() + ": " + e.what());
    }
    merge_config(cfg, user);
  }
  for (const auto& [k, v] : overrides) apply_override(cfg, k, v);
  return cfg;
}

GraphEncoderConfig encoder_config(const Json& cfg) {
  const auto& e = cfg.at("encoder");
  const auto preset = preset_from_string(e.at("preset").get<std::string>());
  GraphEncoderConfig c;
  if (preset != ScalePreset::Custom) {
    c = GraphEncoderConfig::from_preset(preset);
  } else {
    c.layers = e.at("layers").get<std::size_t>();
    c.hidden = e.at("hidden").get<std::size_t>();
    c.heads = e.at("heads").get<std::size_t>();
    c.pe_dim = e.at("pe_dim").get<std::size_t>();
    c.ffn_mult = e.at("ffn_mult").get<std::size_t>();
    c.text_dim = cfg.at("text").at("dim").get<std::size_t>();
  }
  c.init_seed = e.at("init_seed").get<std::uint64_t>();
  c.validate();
  return c;
}

SamplerConfig sampler_config(const Json& cfg) {
  const auto& s = cfg.at("sampler");
  SamplerConfig c;
  c.restart_prob = s.at("restart_prob").get<double>();
  c.node_budget = s.at("node_budget").get<std::size_t>();
  c.max_steps = s.at("max_steps").get<std::size_t>();
  c.rng_seed = s.at("rng_seed").get<std::uint64_t>();
  c.validate();
  return c;
}

PretrainConfig pretrain_config(const Json& cfg) {
  const auto& p = cfg.at("pretrain");
  PretrainConfig c;
  c.epochs = p.at("epochs").get<std::size_t>();
  c.batch_size = p.at("batch_size").get<std::size_t>();
  c.seed = cfg.at("seed").get<std::uint64_t>();
  c.temperature = p.at("temperature").get<double>();
  c.adversary = p.at("adversary").get<bool>();
  c.perturbation.epsilon = p.at("epsilon").get<double>();
  c.perturbation.steps = p.at("steps").get<std::size_t>();
  c.perturbation.step_size = p.at("step_size").get<double>();
  const auto norm = p.at("norm").get<std::string>();
  if (norm == "l2") c.perturbation.norm = PerturbationNorm::L2;
  else if (norm == "linf") c.perturbation.norm = PerturbationNorm::Linf;
  else throw ValidationError("pretrain.norm must be l2 or linf");
  c.optimizer.lr = p.at("lr").get<double>();
  c.optimizer.weight_decay = p.at("weight_decay").get<double>();
  c.perturbation.validate();
  if (!(c.temperature > 0.0)) throw ValidationError("pretrain.temperature must be > 0");
  return c;
}

LlmClientConfig llm_config(const Json& cfg) {
  const auto& l = cfg.at("llm");
  LlmClientConfig c;
  c.endpoint = l.at("endpoint").get<std::string>();
  c.model = l.at("model").get<std::string>();
  c.max_tokens = l.at("max_tokens").get<std::size_t>();
  c.timeout_seconds = l.at("timeout_seconds").get<double>();
  c.retries = l.at("retries").get<int>();
  c.requests_per_second = l.at("requests_per_second").get<double>();
  c.api_key_env = l.at("api_key_env").get<std::string>();
  c.validate();
  return c;
}

EvalConfig eval_config(const Json& cfg) {
  EvalConfig c;
  c.sampler = sampler_config(cfg);
  c.test_fraction = cfg.at("adapt").at("test_fraction").get<double>();
  c.runs = cfg.at("adapt").at("runs").get<std::size_t>();
  c.seed = cfg.at("seed").get<std::uint64_t>();
  return c;
}

LinkEvalConfig link_eval_config(const Json& cfg) {
  LinkEvalConfig c;
  c.sampler = sampler_config(cfg);
  c.test_fraction = cfg.at("adapt").at("link_test_fraction").get<double>();
  c.runs = cfg.at("adapt").at("runs").get<std::size_t>();
  c.seed = cfg.at("seed").get<std::uint64_t>();
  return c;
}

PromptTuneConfig prompt_tune_config(const Json& cfg) {
  const auto& a = cfg.at("adapt");
  PromptTuneConfig c;
  c.epochs = a.at("epochs").get<std::size_t>();
  c.optimizer.lr = a.at("lr").get<double>();
  c.optimizer.weight_decay = a.at("weight_decay").get<double>();
  c.temperature = a.at("temperature").get<double>();
  c.graph_pairs = a.at("graph_pairs").get<bool>();
  c.sampler = sampler_config(cfg);
  return c;
}

theory::TheoremConfig theorem_config(const Json& cfg) {
  const auto& t = cfg.at("theory");
  theory::TheoremConfig c;
  c.samples = t.at("theorem_samples").get<std::size_t>();
  c.radius = t.at("radius").get<double>();
  c.sigmas = t.at("sigmas").get<double>();
  c.seed = cfg.at("seed").get<std::uint64_t>();
  return c;
}

GradCheckOptions gradcheck_options(const Json& cfg) {
  const auto& g = cfg.at("gradcheck");
  GradCheckOptions o;
  o.encoder = encoder_config(cfg);
  o.trials = g.at("trials").get<std::size_t>();
  o.nodes = g.at("nodes").get<std::size_t>();
  o.batch = g.at("batch").get<std::size_t>();
  o.step = g.at("step").get<double>();
  o.tolerance = g.at("tolerance").get<double>();
  o.max_entries = g.at("max_entries").get<std::size_t>();
  o.temperature = g.at("temperature").get<double>();
  o.seed = g.at("seed").get<std::uint64_t>();
  if (const auto corrupt = g.at("corrupt").get<std::string>(); !corrupt.empty()) o.corrupt_tensor = corrupt;
  return o;
}

std::unique_ptr<TextEncoder> make_text_encoder(const Json& cfg) {
  const auto& t = cfg.at("text");
  const auto kind = t.at("kind").get<std::string>();
  const auto dim = t.at("dim").get<std::size_t>();
  if (kind == "hash") return std::make_unique<HashTextEncoder>(dim, t.at("salt").get<std::uint64_t>());
  if (kind == "table") {
    const auto path = cfg.at("paths").at("text_table").get<std::string>();
    if (path.empty()) throw UsageError("text.kind=table requires paths.text_table");
    auto enc = std::make_unique<TableTextEncoder>(TableTextEncoder::load(path));
    if (enc->dim() != dim) throw ValidationError("text table dimension does not match text.dim");
    return enc;
  }
  throw ValidationError("text.kind must be hash or table");
}

}  // namespace graphclip
