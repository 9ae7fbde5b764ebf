#include "absa/text_data.hpp"

#include <algorithm>
#include <array>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "absa/common.hpp"

namespace absa {

namespace pt = boost::property_tree;
using nlohmann::json;

const char* to_string(Polarity p) {
  switch (p) {
    case Polarity::positive: return "positive";
    case Polarity::negative: return "negative";
    case Polarity::neutral: return "neutral";
  }
  return "?";
}

std::optional<Polarity> polarity_from_string(std::string_view s) {
  if (s == "positive") return Polarity::positive;
  if (s == "negative") return Polarity::negative;
  if (s == "neutral") return Polarity::neutral;
  return std::nullopt;
}

const char* to_string(TaskMode t) { return t == TaskMode::three_way ? "3way" : "binary"; }

std::optional<TaskMode> task_from_string(std::string_view s) {
  if (s == "3way" || s == "three_way") return TaskMode::three_way;
  if (s == "binary") return TaskMode::binary;
  return std::nullopt;
}

int label_index(Polarity p, TaskMode task) {
  switch (p) {
    case Polarity::positive: return 0;
    case Polarity::negative: return 1;
    case Polarity::neutral:
      if (task == TaskMode::binary) throw DataError("neutral label in binary task");
      return 2;
  }
  return -1;
}

int num_classes(TaskMode task) { return task == TaskMode::three_way ? 3 : 2; }

namespace {

bool is_ascii_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

// Lowercase ASCII letters only; multibyte UTF-8 sequences pass through so
// byte offsets stay valid.
std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

// Collapse whitespace runs and trim; used only to compare annotated term
// text against the sentence substring.
std::string normalize_ws(std::string_view s) {
  std::string out;
  bool in_space = true;
  for (char c : s) {
    if (is_ascii_space(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

// The annotation offsets count characters; convert to a byte offset. Returns
// -1 when the text has fewer characters.
int64_t char_to_byte_offset(std::string_view text, int64_t char_offset) {
  int64_t chars = 0;
  int64_t i = 0;
  const int64_t n = static_cast<int64_t>(text.size());
  while (chars < char_offset) {
    if (i >= n) return -1;
    unsigned char c = static_cast<unsigned char>(text[static_cast<size_t>(i)]);
    int64_t step = 1;
    if ((c & 0x80u) != 0) {
      if ((c & 0xE0u) == 0xC0u) step = 2;
      else if ((c & 0xF0u) == 0xE0u) step = 3;
      else if ((c & 0xF8u) == 0xF0u) step = 4;
    }
    i += step;
    ++chars;
  }
  return i <= n ? i : -1;
}

}  // namespace

std::vector<RawInstance> parse_semeval(const std::string& xml_path, ParseStats* stats) {
  ParseStats local;
  ParseStats& st = stats ? *stats : local;

  std::ifstream in(xml_path);
  if (!in) throw DataError("cannot open dataset file: " + xml_path);
  pt::ptree tree;
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw DataError("malformed XML in " + xml_path + " at line " + std::to_string(e.line()) +
                    ": " + e.message());
  }

  auto sentences = tree.get_child_optional("sentences");
  if (!sentences) throw DataError("no <sentences> element in " + xml_path);

  std::vector<RawInstance> out;
  int64_t anonymous = 0;
  for (const auto& [name, sent] : *sentences) {
    if (name != "sentence") continue;
    ++st.sentences;
    std::string id = sent.get<std::string>("<xmlattr>.id", "");
    if (id.empty()) id = "s" + std::to_string(anonymous++);
    auto text = sent.get_optional<std::string>("text");
    if (!text) {
      st.warnings.push_back("sentence " + id + ": missing <text>, skipped");
      continue;
    }
    auto terms = sent.get_child_optional("aspectTerms");
    if (!terms) continue;  // sentences without aspect terms contribute nothing
    for (const auto& [tname, term] : *terms) {
      if (tname != "aspectTerm") continue;
      auto term_text = term.get_optional<std::string>("<xmlattr>.term");
      auto pol_text = term.get_optional<std::string>("<xmlattr>.polarity");
      auto from = term.get_optional<int64_t>("<xmlattr>.from");
      auto to = term.get_optional<int64_t>("<xmlattr>.to");
      if (!term_text || !pol_text || !from || !to) {
        st.warnings.push_back("sentence " + id + ": aspectTerm with missing attributes, skipped");
        continue;
      }
      if (*pol_text == "conflict") {
        ++st.conflict_dropped;
        continue;
      }
      auto polarity = polarity_from_string(*pol_text);
      if (!polarity) {
        st.warnings.push_back("sentence " + id + ": unknown polarity '" + *pol_text + "', skipped");
        continue;
      }
      RawInstance raw;
      raw.sentence_id = id;
      raw.sentence = *text;
      raw.term = *term_text;
      raw.from = *from;
      raw.to = *to;
      raw.polarity = *polarity;
      out.push_back(std::move(raw));
      ++st.instances;
    }
  }
  return out;
}

std::vector<Token> tokenize_with_offsets(std::string_view text) {
  std::vector<Token> tokens;
  const int64_t n = static_cast<int64_t>(text.size());
  int64_t i = 0;
  while (i < n) {
    unsigned char c = static_cast<unsigned char>(text[static_cast<size_t>(i)]);
    if (is_ascii_space(c)) {
      ++i;
      continue;
    }
    if (is_ascii_punct(c)) {
      tokens.push_back({lower_ascii(text.substr(static_cast<size_t>(i), 1)), i, i + 1});
      ++i;
      continue;
    }
    int64_t start = i;
    while (i < n) {
      unsigned char d = static_cast<unsigned char>(text[static_cast<size_t>(i)]);
      if (is_ascii_space(d) || is_ascii_punct(d)) break;
      ++i;
    }
    tokens.push_back(
        {lower_ascii(text.substr(static_cast<size_t>(start), static_cast<size_t>(i - start))),
         start, i});
  }
  return tokens;
}

std::optional<TokenizedInstance> tokenize_align(const RawInstance& raw, std::string* warning) {
  auto fail = [&](const std::string& why) -> std::optional<TokenizedInstance> {
    if (warning)
      *warning = "sentence " + raw.sentence_id + ", aspect '" + raw.term + "': " + why;
    return std::nullopt;
  };

  if (raw.from < 0 || raw.to <= raw.from) return fail("invalid character offsets");
  const int64_t byte_from = char_to_byte_offset(raw.sentence, raw.from);
  const int64_t byte_to = char_to_byte_offset(raw.sentence, raw.to);
  if (byte_from < 0 || byte_to < 0 || byte_to > static_cast<int64_t>(raw.sentence.size()))
    return fail("offsets beyond sentence end");

  const std::string sub = raw.sentence.substr(static_cast<size_t>(byte_from),
                                              static_cast<size_t>(byte_to - byte_from));
  if (normalize_ws(lower_ascii(sub)) != normalize_ws(lower_ascii(raw.term)))
    return fail("offset substring '" + sub + "' does not match the term");

  auto tokens = tokenize_with_offsets(raw.sentence);
  int first = -1, last = -1;
  for (size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t].end > byte_from && tokens[t].begin < byte_to) {
      if (first < 0) first = static_cast<int>(t);
      last = static_cast<int>(t);
    }
  }
  if (first < 0) return fail("aspect span covers no token");

  TokenizedInstance inst;
  inst.tokens.reserve(tokens.size());
  for (auto& t : tokens) inst.tokens.push_back(std::move(t.text));
  inst.span_start = first;
  inst.span_len = last - first + 1;
  inst.label = raw.polarity;
  inst.sentence_id = raw.sentence_id;
  return inst;
}

std::vector<TokenizedInstance> tokenize_all(std::span<const RawInstance> raws, ParseStats* stats) {
  std::vector<TokenizedInstance> out;
  out.reserve(raws.size());
  for (const auto& raw : raws) {
    std::string warning;
    auto inst = tokenize_align(raw, &warning);
    if (!inst) {
      if (stats) {
        ++stats->offset_mismatch_skipped;
        stats->warnings.push_back(warning);
      }
      continue;
    }
    out.push_back(std::move(*inst));
  }
  return out;
}

std::vector<int64_t> read_split_ids(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dev-split list: " + path);
  std::vector<int64_t> ids;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string trimmed;
    for (char c : line)
      if (!is_ascii_space(static_cast<unsigned char>(c))) trimmed.push_back(c);
    if (trimmed.empty()) continue;
    try {
      size_t used = 0;
      int64_t v = std::stoll(trimmed, &used);
      if (used != trimmed.size()) throw std::invalid_argument("trailing junk");
      ids.push_back(v);
    } catch (const std::exception&) {
      throw DataError("dev-split list " + path + " line " + std::to_string(line_no) +
                      ": not an instance index");
    }
  }
  return ids;
}

DevSplit apply_dev_split(const std::vector<TokenizedInstance>& all,
                         const std::optional<std::vector<int64_t>>& ids, RngStream& split_rng,
                         int64_t dev_size) {
  const int64_t n = static_cast<int64_t>(all.size());
  std::vector<int64_t> chosen;
  DevSplit result;

  if (ids) {
    std::unordered_set<int64_t> seen;
    for (int64_t id : *ids) {
      if (id < 0 || id >= n)
        throw DataError("dev-split id " + std::to_string(id) + " out of range (train size " +
                        std::to_string(n) + ")");
      if (!seen.insert(id).second)
        throw DataError("dev-split id " + std::to_string(id) + " listed twice");
    }
    chosen.assign(ids->begin(), ids->end());
  } else {
    if (dev_size > n)
      throw DataError("cannot draw a dev set of " + std::to_string(dev_size) + " from " +
                      std::to_string(n) + " instances");
    std::vector<int64_t> indices(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) indices[static_cast<size_t>(i)] = i;
    split_rng.shuffle(indices);
    chosen.assign(indices.begin(), indices.begin() + static_cast<size_t>(dev_size));
    result.used_fallback = true;
  }

  std::vector<bool> in_dev(static_cast<size_t>(n), false);
  for (int64_t id : chosen) in_dev[static_cast<size_t>(id)] = true;
  for (int64_t i = 0; i < n; ++i) {
    if (in_dev[static_cast<size_t>(i)])
      result.dev.push_back(all[static_cast<size_t>(i)]);
    else
      result.train.push_back(all[static_cast<size_t>(i)]);
  }
  return result;
}

DatasetSplit to_task(const DatasetSplit& split, TaskMode mode) {
  DatasetSplit out;
  out.task = mode;
  auto filter = [mode](const std::vector<TokenizedInstance>& in) {
    std::vector<TokenizedInstance> kept;
    for (const auto& inst : in)
      if (mode == TaskMode::three_way || inst.label != Polarity::neutral) kept.push_back(inst);
    return kept;
  };
  out.train = filter(split.train);
  out.dev = filter(split.dev);
  out.test = filter(split.test);
  return out;
}

LabelCounts count_labels(std::span<const TokenizedInstance> instances) {
  LabelCounts c;
  for (const auto& inst : instances) {
    switch (inst.label) {
      case Polarity::positive: ++c.positive; break;
      case Polarity::neutral: ++c.neutral; break;
      case Polarity::negative: ++c.negative; break;
    }
  }
  return c;
}

MajorityAgreement majority_agreement(std::span<const TokenizedInstance> instances) {
  MajorityAgreement result;
  result.total = static_cast<int64_t>(instances.size());
  std::map<std::string, std::array<int64_t, 3>> groups;
  for (const auto& inst : instances)
    ++groups[inst.sentence_id][static_cast<size_t>(label_index(inst.label, TaskMode::three_way))];
  result.sentences = static_cast<int64_t>(groups.size());
  for (const auto& inst : instances) {
    const auto& counts = groups[inst.sentence_id];
    int64_t best = std::max({counts[0], counts[1], counts[2]});
    int holders = 0;
    for (int64_t c : counts)
      if (c == best) ++holders;
    if (holders > 1) {
      ++result.tied;
      continue;
    }
    if (counts[static_cast<size_t>(label_index(inst.label, TaskMode::three_way))] == best)
      ++result.agreeing;
  }
  return result;
}

void save_instances(const std::string& path, std::span<const TokenizedInstance> instances) {
  std::ostringstream out;
  for (const auto& inst : instances) {
    json j;
    j["tokens"] = inst.tokens;
    j["span_start"] = inst.span_start;
    j["span_len"] = inst.span_len;
    j["label"] = to_string(inst.label);
    j["sentence_id"] = inst.sentence_id;
    out << j.dump() << "\n";
  }
  write_file(path, out.str());
}

std::vector<TokenizedInstance> load_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prepared dataset: " + path);
  std::vector<TokenizedInstance> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("prepared dataset " + path + " line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    TokenizedInstance inst;
    try {
      inst.tokens = j.at("tokens").get<std::vector<std::string>>();
      inst.span_start = j.at("span_start").get<int>();
      inst.span_len = j.at("span_len").get<int>();
      auto pol = polarity_from_string(j.at("label").get<std::string>());
      if (!pol) throw DataError("bad label");
      inst.label = *pol;
      inst.sentence_id = j.at("sentence_id").get<std::string>();
    } catch (const json::exception& e) {
      throw DataError("prepared dataset " + path + " line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    if (inst.span_start < 0 || inst.span_len < 1 ||
        inst.span_start + inst.span_len > static_cast<int>(inst.tokens.size()))
      throw DataError("prepared dataset " + path + " line " + std::to_string(line_no) +
                      ": aspect span outside sentence");
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace absa
