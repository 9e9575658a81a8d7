#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "graphclip/adapt.hpp"
#include "graphclip/corpus.hpp"
#include "graphclip/gradcheck.hpp"
#include "graphclip/graph_encoder.hpp"
#include "graphclip/pretrain.hpp"
#include "graphclip/theory.hpp"

namespace graphclip {

using Json = nlohmann::ordered_json;

// Every recognised key with its default value.
Json default_config();

// Overlays `user` onto `base`. Keys absent from `base` and type changes are
// rejected with the dotted path of the offending key.
void merge_config(Json& base, const Json& user, const std::string& prefix = "");

// Sets a dotted key from command-line text, parsed by the type of the
// existing value.
void apply_override(Json& cfg, const std::string& dotted, const std::string& value);

Json load_config(const std::optional<std::filesystem::path>& file,
                 const std::vector<std::pair<std::string, std::string>>& overrides);

GraphEncoderConfig encoder_config(const Json& cfg);
SamplerConfig sampler_config(const Json& cfg);
PretrainConfig pretrain_config(const Json& cfg);
LlmClientConfig llm_config(const Json& cfg);
EvalConfig eval_config(const Json& cfg);
LinkEvalConfig link_eval_config(const Json& cfg);
PromptTuneConfig prompt_tune_config(const Json& cfg);
theory::TheoremConfig theorem_config(const Json& cfg);
GradCheckOptions gradcheck_options(const Json& cfg);

std::unique_ptr<TextEncoder> make_text_encoder(const Json& cfg);

}  // namespace graphclip
