#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "graphclip/graphml.hpp"

namespace graphclip {

// Directory holding prompts/ and labels/ assets; overridable with
// GRAPHCLIP_ASSETS in the environment.
std::filesystem::path asset_dir();

// Raw summary-generation template for a domain, read from
// <asset_dir>/prompts/<domain>.txt.
std::string load_prompt_template(Domain d, const std::filesystem::path& dir = asset_dir());

// Single pass over the template: "{seed}" becomes the seed index and
// "{GraphML}" the document. Substituted text is never rescanned.
std::string render_template(std::string_view tmpl, std::size_t seed_index, std::string_view graphml);

std::string render_summary_prompt(const std::string& graphml, Domain d, std::size_t seed_index,
                                  const std::filesystem::path& dir = asset_dir());

// Number of "{seed}" / "{GraphML}" placeholders left in a string.
std::size_t count_placeholders(std::string_view s);

}  // namespace graphclip
