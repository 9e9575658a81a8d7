#include "graphclip/prompts.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "graphclip/errors.hpp"

namespace graphclip {

namespace {
constexpr std::string_view kSeed = "{seed}";
constexpr std::string_view kGraph = "{GraphML}";
}  // namespace

std::filesystem::path asset_dir() {
  if (const char* env = std::getenv("GRAPHCLIP_ASSETS"); env && *env) return env;
  return GRAPHCLIP_ASSET_DIR;
}

std::string load_prompt_template(Domain d, const std::filesystem::path& dir) {
  const auto path = dir / "prompts" / (to_string(d) + ".txt");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read prompt template " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string render_template(std::string_view tmpl, std::size_t seed_index, std::string_view graphml) {
  const std::string seed = std::to_string(seed_index);
  std::string out;
  out.reserve(tmpl.size() + graphml.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.compare(i, kSeed.size(), kSeed) == 0) {
      out += seed;
      i += kSeed.size();
    } else if (tmpl.compare(i, kGraph.size(), kGraph) == 0) {
      out += graphml;
      i += kGraph.size();
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

std::string render_summary_prompt(const std::string& graphml, Domain d, std::size_t seed_index,
                                  const std::filesystem::path& dir) {
  return render_template(load_prompt_template(d, dir), seed_index, graphml);
}

std::size_t count_placeholders(std::string_view s) {
  std::size_t n = 0;
  for (auto p : {kSeed, kGraph})
    for (auto pos = s.find(p); pos != std::string_view::npos; pos = s.find(p, pos + 1)) ++n;
  return n;
}

}  // namespace graphclip
