#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "graphclip/matrix.hpp"

namespace graphclip {

struct Embedding {
  std::vector<double> values;
  bool normalized = false;

  std::size_t dim() const noexcept { return values.size(); }
};

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// Lower-cased alphanumeric tokens; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view text);

// Frozen sentence-level text encoder. Implementations hold no mutable state,
// so encoding is safe from any number of threads.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const noexcept = 0;
  // Mean-pooled token representation, L2-normalized.
  virtual Embedding encode(std::string_view text) const = 0;
  // Digest of all encoder state, used to assert the tower stays frozen.
  virtual std::uint64_t checksum() const = 0;
  virtual std::string kind() const = 0;
};

// Deterministic bag-of-tokens encoder: each token maps to a pseudo-random
// vector derived from its hash; the text embedding is the normalized mean.
class HashTextEncoder final : public TextEncoder {
 public:
  explicit HashTextEncoder(std::size_t dim, std::uint64_t salt = 0);
  std::size_t dim() const noexcept override { return dim_; }
  Embedding encode(std::string_view text) const override;
  std::uint64_t checksum() const override;
  std::string kind() const override { return "hash"; }
  std::vector<double> token_vector(std::string_view token) const;

 private:
  std::size_t dim_;
  std::uint64_t salt_;
};

// Closed lookup table of precomputed embeddings keyed by text hash.
// File format: first line "dim <d>", then one record per line:
//   <16 hex digits of fnv1a64(text)>\t<v0> <v1> ... <v{d-1}>
class TableTextEncoder final : public TextEncoder {
 public:
  explicit TableTextEncoder(std::size_t dim) : dim_(dim) {}
  static TableTextEncoder load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void insert(std::string_view text, std::vector<double> vector);
  std::size_t entries() const noexcept { return table_.size(); }

  std::size_t dim() const noexcept override { return dim_; }
  Embedding encode(std::string_view text) const override;
  std::uint64_t checksum() const override;
  std::string kind() const override { return "table"; }

 private:
  std::size_t dim_;
  std::unordered_map<std::uint64_t, std::vector<double>> table_;
};

// Encodes each text as one row of the result.
Matrix encode_texts(const TextEncoder& enc, const std::vector<std::string>& texts);

}  // namespace graphclip
