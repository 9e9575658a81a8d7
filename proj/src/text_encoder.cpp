#include "graphclip/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "graphclip/graph.hpp"

namespace graphclip {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

HashTextEncoder::HashTextEncoder(std::size_t dim, std::uint64_t salt) : dim_(dim), salt_(salt) {
  if (dim == 0) throw ValidationError("text encoder dimension must be positive");
}

std::vector<double> HashTextEncoder::token_vector(std::string_view token) const {
  std::uint64_t state = fnv1a64(token) ^ mix_seed(salt_);
  std::vector<double> v(dim_);
  // Box-Muller over a SplitMix stream: isotropic token directions.
  for (std::size_t i = 0; i < dim_; i += 2) {
    state = mix_seed(state);
    const double u1 = (static_cast<double>(state >> 11) + 0.5) * 0x1.0p-53;
    state = mix_seed(state);
    const double u2 = static_cast<double>(state >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * M_PI * u2);
    if (i + 1 < dim_) v[i + 1] = r * std::sin(2.0 * M_PI * u2);
  }
  return v;
}

Embedding HashTextEncoder::encode(std::string_view text) const {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw ValidationError("cannot encode text without tokens");
  std::vector<double> acc(dim_, 0.0);
  for (const auto& t : tokens) {
    const auto v = token_vector(t);
    for (std::size_t i = 0; i < dim_; ++i) acc[i] += v[i];
  }
  for (double& x : acc) x /= static_cast<double>(tokens.size());
  const double n = l2_norm(acc);
  if (n > 0.0)
    for (double& x : acc) x /= n;
  return {std::move(acc), true};
}

std::uint64_t HashTextEncoder::checksum() const {
  std::uint64_t h = fnv1a64("hash");
  h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&dim_), sizeof dim_), h);
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(&salt_), sizeof salt_), h);
}

void TableTextEncoder::insert(std::string_view text, std::vector<double> vector) {
  if (vector.size() != dim_)
    throw ShapeError("table entry has dimension " + std::to_string(vector.size()) + ", expected " +
                     std::to_string(dim_));
  table_[fnv1a64(text)] = std::move(vector);
}

Embedding TableTextEncoder::encode(std::string_view text) const {
  auto it = table_.find(fnv1a64(text));
  if (it == table_.end()) throw ValidationError("text not present in embedding table");
  std::vector<double> v = it->second;
  const double n = l2_norm(v);
  if (n > 0.0)
    for (double& x : v) x /= n;
  return {std::move(v), true};
}

std::uint64_t TableTextEncoder::checksum() const {
  // Order-independent over the hash map by visiting keys sorted.
  std::map<std::uint64_t, const std::vector<double>*> sorted;
  for (const auto& [k, v] : table_) sorted.emplace(k, &v);
  std::uint64_t h = fnv1a64("table");
  for (const auto& [k, v] : sorted) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&k), sizeof k), h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(v->data()), v->size() * sizeof(double)), h);
  }
  return h;
}

TableTextEncoder TableTextEncoder::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embedding table " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("empty embedding table", 1);
  std::size_t dim = 0;
  if (std::sscanf(line.c_str(), "dim %zu", &dim) != 1 || dim == 0)
    throw ParseError("expected 'dim <d>' header", 1);
  TableTextEncoder enc(dim);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab != 16) throw ParseError("expected 16 hex digits then a tab", lineno);
    std::uint64_t key = 0;
    try {
      key = std::stoull(line.substr(0, 16), nullptr, 16);
    } catch (const std::exception&) {
      throw ParseError("bad hash key", lineno);
    }
    std::istringstream vs(line.substr(tab + 1));
    std::vector<double> v;
    double x = 0.0;
    while (vs >> x) v.push_back(x);
    if (v.size() != dim) throw ParseError("record has " + std::to_string(v.size()) + " values", lineno);
    enc.table_[key] = std::move(v);
  }
  return enc;
}

void TableTextEncoder::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write embedding table " + path.string());
  out << "dim " << dim_ << '\n';
  std::map<std::uint64_t, const std::vector<double>*> sorted;
  for (const auto& [k, v] : table_) sorted.emplace(k, &v);
  char buf[32];
  for (const auto& [k, v] : sorted) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(k));
    out << buf << '\t';
    for (std::size_t i = 0; i < v->size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", (*v)[i]);
      out << (i ? " " : "") << buf;
    }
    out << '\n';
  }
}

Matrix encode_texts(const TextEncoder& enc, const std::vector<std::string>& texts) {
  Matrix out(texts.size(), enc.dim());
  const auto n = static_cast<std::ptrdiff_t>(texts.size());
  std::vector<std::string> errors(texts.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto e = enc.encode(texts[static_cast<std::size_t>(i)]);
      std::copy(e.values.begin(), e.values.end(), out.row_span(static_cast<std::size_t>(i)).begin());
    } catch (const std::exception& ex) {
      errors[static_cast<std::size_t>(i)] = ex.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw ValidationError("text " + std::to_string(i) + ": " + errors[i]);
  return out;
}

}  // namespace graphclip
