#include "absa/embedding.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>

#include "absa/common.hpp"

namespace absa {

namespace {

constexpr char kMagic[8] = {'A', 'B', 'S', 'A', 'E', 'M', 'B', '1'};
constexpr size_t kMaxRecordedWarnings = 20;

void warn(EmbeddingLoadStats& stats, std::string msg) {
  ++stats.skipped_lines;
  if (stats.warnings.size() < kMaxRecordedWarnings) stats.warnings.push_back(std::move(msg));
}

template <class T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_raw(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void EmbeddingTable::init_oov_row(std::span<double> row, RngStream& rng) {
  for (double& v : row) v = rng.uniform_open(-0.01, 0.01);
}

Tensor<double> EmbeddingTable::init_oov(int64_t count, int64_t dim, RngStream& rng) {
  Tensor<double> out({count, dim});
  for (int64_t i = 0; i < count; ++i)
    init_oov_row({out.data.data() + i * dim, static_cast<size_t>(dim)}, rng);
  return out;
}

std::pair<EmbeddingTable, EmbeddingLoadStats> EmbeddingTable::build(
    const std::string& pretrained_path, const Vocabulary& vocab, int64_t dim, RngStream& rng) {
  EmbeddingTable table(vocab.size(), dim);
  EmbeddingLoadStats stats;
  std::vector<bool> found(static_cast<size_t>(vocab.size()), false);

  if (!pretrained_path.empty()) {
    std::ifstream in(pretrained_path);
    if (!in) throw DataError("cannot open pretrained vectors: " + pretrained_path);
    std::string line;
    int64_t line_no = 0;
    std::vector<double> values(static_cast<size_t>(dim));
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const char* p = line.c_str();
      const char* end = p + line.size();
      // token = everything up to the first space
      const char* tok_end = p;
      while (tok_end < end && *tok_end != ' ' && *tok_end != '\t') ++tok_end;
      std::string token(p, tok_end);
      if (token.empty()) {
        warn(stats, "line " + std::to_string(line_no) + ": missing token");
        continue;
      }
      if (!vocab.contains(token)) continue;  // stream past tokens we do not need
      int id = vocab.id_of(token);
      if (id == vocab.pad_id() || found[static_cast<size_t>(id)]) continue;

      const char* cursor = tok_end;
      int64_t count = 0;
      bool bad = false;
      while (cursor < end) {
        char* next = nullptr;
        double v = std::strtod(cursor, &next);
        if (next == cursor) {
          // trailing whitespace is fine; anything unparsable is not
          while (cursor < end && (*cursor == ' ' || *cursor == '\t' || *cursor == '\r')) ++cursor;
          if (cursor < end) bad = true;
          break;
        }
        if (count < dim) values[static_cast<size_t>(count)] = v;
        ++count;
        cursor = next;
      }
      if (bad || count != dim) {
        warn(stats, "line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                        " values, got " + std::to_string(count) + (bad ? " (unparsable)" : ""));
        continue;
      }
      auto dst = table.mutable_row(id);
      for (int64_t j = 0; j < dim; ++j) dst[static_cast<size_t>(j)] = values[static_cast<size_t>(j)];
      found[static_cast<size_t>(id)] = true;
      ++stats.hits;
    }
    if (stats.hits == 0 && stats.skipped_lines > 0)
      throw DataError("pretrained vectors in " + pretrained_path +
                      " are dimension-inconsistent with the requested width " +
                      std::to_string(dim) + " (every candidate line failed)");
  }

  // OOV rows are drawn once, after the file pass, in ascending id order, so
  // the table is a pure function of (file, vocabulary, seed).
  for (int id = 1; id < vocab.size(); ++id) {
    if (found[static_cast<size_t>(id)]) continue;
    init_oov_row(table.mutable_row(id), rng);
    ++stats.misses;
  }
  return {std::move(table), std::move(stats)};
}

void EmbeddingTable::save(const std::string& path, const FileHeader& header) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write embedding table: " + path);
  out.write(kMagic, sizeof(kMagic));
  uint32_t version = 1;
  write_raw(out, version);
  uint32_t dim32 = static_cast<uint32_t>(dim_);
  write_raw(out, dim32);
  uint64_t rows64 = static_cast<uint64_t>(rows_);
  write_raw(out, rows64);
  write_raw(out, header.vocab_hash);
  write_raw(out, header.source_hash);
  write_raw(out, header.seed);
  out.write(reinterpret_cast<const char*>(data_.data()),
            static_cast<std::streamsize>(data_.size() * sizeof(double)));
  if (!out) throw DataError("error writing embedding table: " + path);
}

std::pair<EmbeddingTable, EmbeddingTable::FileHeader> EmbeddingTable::load(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding table: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not an embedding table file: " + path);
  uint32_t version = 0, dim32 = 0;
  uint64_t rows64 = 0;
  FileHeader header;
  read_raw(in, version);
  read_raw(in, dim32);
  read_raw(in, rows64);
  read_raw(in, header.vocab_hash);
  read_raw(in, header.source_hash);
  read_raw(in, header.seed);
  if (!in || version != 1) throw DataError("unsupported embedding table version in " + path);
  EmbeddingTable table(static_cast<int64_t>(rows64), static_cast<int64_t>(dim32));
  in.read(reinterpret_cast<char*>(table.data_.data()),
          static_cast<std::streamsize>(table.data_.size() * sizeof(double)));
  if (!in) throw DataError("truncated embedding table: " + path);
  return {std::move(table), header};
}

}  // namespace absa
