#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absa/rng.hpp"
#include "absa/tensor.hpp"
#include "absa/vocab.hpp"

namespace absa {

struct EmbeddingLoadStats {
  int64_t hits = 0;            // vocabulary tokens found in the vector file
  int64_t misses = 0;          // vocabulary tokens initialized as OOV
  int64_t skipped_lines = 0;   // malformed lines in the vector file
  std::vector<std::string> warnings;
};

// Frozen |V| x k word-vector table. Row 0 (padding) is exactly zero and the
// whole table stays byte-identical through training; it is never part of the
// trainable or regularized parameter set.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(int64_t rows, int64_t dim) : dim_(dim), data_(rows * dim, 0.0), rows_(rows) {}

  int64_t rows() const { return rows_; }
  int64_t dim() const { return dim_; }

  std::span<const double> row(int64_t id) const {
    return {data_.data() + id * dim_, static_cast<size_t>(dim_)};
  }
  std::span<double> mutable_row(int64_t id) {
    return {data_.data() + id * dim_, static_cast<size_t>(dim_)};
  }

  uint64_t content_hash() const { return fnv1a64(data_.data(), data_.size() * sizeof(double)); }

  // Build the table for a vocabulary: in-vocabulary tokens take vectors from
  // the whitespace-separated text file (token then `dim` reals per line),
  // every other non-pad token gets a seeded OOV row drawn after the file is
  // consumed, in ascending id order. An empty path means no pretrained file.
  static std::pair<EmbeddingTable, EmbeddingLoadStats> build(const std::string& pretrained_path,
                                                             const Vocabulary& vocab, int64_t dim,
                                                             RngStream& rng);

  // One i.i.d. component per cell, strictly inside (-0.01, 0.01).
  static void init_oov_row(std::span<double> row, RngStream& rng);
  static Tensor<double> init_oov(int64_t count, int64_t dim, RngStream& rng);

  struct FileHeader {
    uint64_t vocab_hash = 0;
    uint64_t source_hash = 0;  // hash of the pretrained text file (0 if none)
    uint64_t seed = 0;
  };

  void save(const std::string& path, const FileHeader& header) const;
  static std::pair<EmbeddingTable, FileHeader> load(const std::string& path);

 private:
  int64_t dim_ = 0;
  std::vector<double> data_;
  int64_t rows_ = 0;
};

// n x k sentence matrix for a token sequence; unknown tokens go through the
// persisted OOV entry, the pad token through the zero row.
template <class T>
Tensor<T> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                        const EmbeddingTable& table) {
  Tensor<T> out({static_cast<int64_t>(tokens.size()), table.dim()});
  for (size_t i = 0; i < tokens.size(); ++i) {
    auto src = table.row(vocab.id_of(tokens[i]));
    for (int64_t j = 0; j < table.dim(); ++j)
      out.at(static_cast<int64_t>(i), j) = static_cast<T>(src[static_cast<size_t>(j)]);
  }
  return out;
}

template <class T>
Tensor<T> encode_ids(std::span<const int> ids, const EmbeddingTable& table) {
  Tensor<T> out({static_cast<int64_t>(ids.size()), table.dim()});
  for (size_t i = 0; i < ids.size(); ++i) {
    auto src = table.row(ids[i]);
    for (int64_t j = 0; j < table.dim(); ++j)
      out.at(static_cast<int64_t>(i), j) = static_cast<T>(src[static_cast<size_t>(j)]);
  }
  return out;
}

}  // namespace absa
