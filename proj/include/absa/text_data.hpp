#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absa/rng.hpp"

namespace absa {

enum class Polarity { positive, negative, neutral };
enum class TaskMode { three_way, binary };

const char* to_string(Polarity p);
std::optional<Polarity> polarity_from_string(std::string_view s);
const char* to_string(TaskMode t);
std::optional<TaskMode> task_from_string(std::string_view s);

// Class order is positive, negative, neutral; the binary task drops neutral.
int label_index(Polarity p, TaskMode task);
int num_classes(TaskMode task);

// One (sentence, aspect-term) pair exactly as annotated: character offsets
// refer to the decoded sentence text.
struct RawInstance {
  std::string sentence_id;
  std::string sentence;
  std::string term;
  int64_t from = 0;
  int64_t to = 0;
  Polarity polarity = Polarity::neutral;
};

// Tokenized pair: lowercased tokens with punctuation detached, plus the
// minimal token range covering the aspect's character span.
struct TokenizedInstance {
  std::vector<std::string> tokens;
  int span_start = 0;
  int span_len = 0;
  Polarity label = Polarity::neutral;
  std::string sentence_id;

  bool operator==(const TokenizedInstance&) const = default;
};

struct ParseStats {
  int64_t sentences = 0;
  int64_t instances = 0;
  int64_t conflict_dropped = 0;
  int64_t offset_mismatch_skipped = 0;
  int64_t empty_span_skipped = 0;
  std::vector<std::string> warnings;
};

// Reads a SemEval-2014 task-4 XML file (sentences > sentence > text +
// aspectTerms > aspectTerm). "conflict" instances are dropped and counted;
// instances whose offsets do not reproduce the term text are skipped with a
// warning. Malformed XML is fatal, with the parser's line number.
std::vector<RawInstance> parse_semeval(const std::string& xml_path, ParseStats* stats = nullptr);

struct Token {
  std::string text;
  int64_t begin = 0;  // byte offsets into the original sentence
  int64_t end = 0;
};

// Lowercase, split on whitespace, each ASCII punctuation character becomes a
// standalone token. Byte offsets are preserved for span alignment.
std::vector<Token> tokenize_with_offsets(std::string_view text);

// Tokenize one raw instance and align the aspect character span to the
// minimal covering token range. Returns nothing (with a warning) if the
// offsets are inconsistent or cover no token.
std::optional<TokenizedInstance> tokenize_align(const RawInstance& raw,
                                                std::string* warning = nullptr);

std::vector<TokenizedInstance> tokenize_all(std::span<const RawInstance> raws,
                                            ParseStats* stats = nullptr);

// --- dev split ---------------------------------------------------------

// One zero-based train-instance index per line.
std::vector<int64_t> read_split_ids(const std::string& path);

struct DevSplit {
  std::vector<TokenizedInstance> train;
  std::vector<TokenizedInstance> dev;
  bool used_fallback = false;  // no id list supplied; seeded random draw
};

// Moves the listed instances into the dev set, keeping corpus order on both
// sides. Without an id list, draws `dev_size` instances with the given
// stream (flagged as a fallback). Missing or duplicate ids are fatal.
DevSplit apply_dev_split(const std::vector<TokenizedInstance>& all,
                         const std::optional<std::vector<int64_t>>& ids, RngStream& split_rng,
                         int64_t dev_size = 500);

// --- task + statistics -------------------------------------------------

struct DatasetSplit {
  std::vector<TokenizedInstance> train;
  std::vector<TokenizedInstance> dev;
  std::vector<TokenizedInstance> test;
  TaskMode task = TaskMode::three_way;
};

// three_way keeps everything; binary removes neutral instances everywhere.
DatasetSplit to_task(const DatasetSplit& split, TaskMode mode);

struct LabelCounts {
  int64_t positive = 0;
  int64_t neutral = 0;
  int64_t negative = 0;
  int64_t total() const { return positive + neutral + negative; }
};

LabelCounts count_labels(std::span<const TokenizedInstance> instances);

struct MajorityAgreement {
  int64_t agreeing = 0;  // instance label equals its sentence's strict majority label
  int64_t tied = 0;      // instance lives in a sentence whose label counts tie
  int64_t total = 0;
  int64_t sentences = 0;
};

// Groups instances by sentence id; a label must hold a strict majority to
// count, tied sentences are reported separately.
MajorityAgreement majority_agreement(std::span<const TokenizedInstance> instances);

// --- prepared-dataset files (JSON lines, UTF-8) --------------------------

void save_instances(const std::string& path, std::span<const TokenizedInstance> instances);
std::vector<TokenizedInstance> load_instances(const std::string& path);

}  // namespace absa
