#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "absa/common.hpp"
#include "absa/rng.hpp"
#include "absa/text_data.hpp"

using namespace absa;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("absa_text_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

const char* kSampleXml = R"(<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<sentences>
  <sentence id="1">
    <text>great food but the service was dreadful</text>
    <aspectTerms>
      <aspectTerm term="food" polarity="positive" from="6" to="10"/>
      <aspectTerm term="service" polarity="negative" from="19" to="26"/>
    </aspectTerms>
  </sentence>
  <sentence id="2">
    <text>battery life is amazing</text>
    <aspectTerms>
      <aspectTerm term="battery life" polarity="positive" from="0" to="12"/>
    </aspectTerms>
  </sentence>
  <sentence id="3">
    <text>nothing annotated here</text>
  </sentence>
  <sentence id="4">
    <text>the keyboard is fine, I guess</text>
    <aspectTerms>
      <aspectTerm term="keyboard" polarity="conflict" from="4" to="12"/>
      <aspectTerm term="keyboard" polarity="neutral" from="4" to="12"/>
      <aspectTerm term="wrong offsets" polarity="positive" from="0" to="3"/>
    </aspectTerms>
  </sentence>
</sentences>)";

}  // namespace

TEST_CASE("parse_semeval extracts instances, drops conflict, skips bad offsets") {
  TempDir tmp;
  write_text(tmp.file("data.xml"), kSampleXml);
  ParseStats stats;
  auto raws = parse_semeval(tmp.file("data.xml"), &stats);
  CHECK(stats.sentences == 4);
  CHECK(stats.conflict_dropped == 1);
  CHECK(raws.size() == 5);  // bad-offset instance still parsed; tokenize_align rejects it

  auto tokenized = tokenize_all(raws, &stats);
  CHECK(tokenized.size() == 4);
  CHECK(stats.offset_mismatch_skipped == 1);
}

TEST_CASE("malformed XML is fatal with a location") {
  TempDir tmp;
  write_text(tmp.file("bad.xml"), "<sentences><sentence>");
  CHECK_THROWS_AS(parse_semeval(tmp.file("bad.xml")), DataError);
  try {
    parse_semeval(tmp.file("bad.xml"));
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
}

TEST_CASE("tokenizer lowers case, detaches punctuation, keeps offsets") {
  auto tokens = tokenize_with_offsets("The fries-with-ketchup, truly great!");
  std::vector<std::string> texts;
  for (auto& t : tokens) texts.push_back(t.text);
  std::vector<std::string> expected = {"the",     "fries", "-",    "with", "-",
                                       "ketchup", ",",     "truly", "great", "!"};
  CHECK(texts == expected);
  CHECK(tokens[0].begin == 0);
  CHECK(tokens[0].end == 3);
  CHECK(tokens[1].begin == 4);
}

TEST_CASE("aspect span alignment") {
  RawInstance raw;
  raw.sentence_id = "1";
  raw.sentence = "great food but the service was dreadful";
  raw.term = "service";
  raw.from = 19;
  raw.to = 26;
  raw.polarity = Polarity::negative;
  auto inst = tokenize_align(raw);
  REQUIRE(inst.has_value());
  CHECK(inst->tokens[static_cast<size_t>(inst->span_start)] == "service");
  CHECK(inst->span_len == 1);

  // aspect at sentence start
  RawInstance start;
  start.sentence_id = "2";
  start.sentence = "battery life is amazing";
  start.term = "battery life";
  start.from = 0;
  start.to = 12;
  start.polarity = Polarity::positive;
  auto s = tokenize_align(start);
  REQUIRE(s.has_value());
  CHECK(s->span_start == 0);
  CHECK(s->span_len == 2);  // multi-word aspect covers two tokens

  // offsets that do not reproduce the term are rejected
  RawInstance bad = raw;
  bad.from = 0;
  bad.to = 5;
  std::string warning;
  CHECK_FALSE(tokenize_align(bad, &warning).has_value());
  CHECK(!warning.empty());
}

TEST_CASE("span tokens contain the aspect text after normalization") {
  RawInstance raw;
  raw.sentence_id = "x";
  raw.sentence = "the Wine-List was excellent.";
  raw.term = "Wine-List";
  raw.from = 4;
  raw.to = 13;
  raw.polarity = Polarity::positive;
  auto inst = tokenize_align(raw);
  REQUIRE(inst.has_value());
  std::string joined;
  for (int i = inst->span_start; i < inst->span_start + inst->span_len; ++i) {
    joined += inst->tokens[static_cast<size_t>(i)];
  }
  CHECK(joined == "wine-list");
  CHECK(inst->span_len == 3);  // "wine", "-", "list"
}

TEST_CASE("dev split honors the id list and stays disjoint") {
  std::vector<TokenizedInstance> all(10);
  for (int i = 0; i < 10; ++i) {
    all[static_cast<size_t>(i)].tokens = {"tok" + std::to_string(i)};
    all[static_cast<size_t>(i)].span_start = 0;
    all[static_cast<size_t>(i)].span_len = 1;
    all[static_cast<size_t>(i)].sentence_id = std::to_string(i);
  }
  RngStream rng(1, "split");
  std::optional<std::vector<int64_t>> ids = std::vector<int64_t>{1, 3, 5};
  auto split = apply_dev_split(all, ids, rng, 3);
  CHECK_FALSE(split.used_fallback);
  CHECK(split.dev.size() == 3);
  CHECK(split.train.size() == 7);
  CHECK(split.dev[0].sentence_id == "1");
  CHECK(split.dev[1].sentence_id == "3");
  for (const auto& d : split.dev)
    for (const auto& t : split.train) CHECK(d.sentence_id != t.sentence_id);

  // duplicates and out-of-range ids are fatal
  CHECK_THROWS_AS(
      apply_dev_split(all, std::vector<int64_t>{1, 1}, rng, 2), DataError);
  CHECK_THROWS_AS(
      apply_dev_split(all, std::vector<int64_t>{55}, rng, 1), DataError);
}

TEST_CASE("dev split fallback draws the requested count deterministically") {
  std::vector<TokenizedInstance> all(40);
  for (int i = 0; i < 40; ++i) {
    all[static_cast<size_t>(i)].tokens = {"t"};
    all[static_cast<size_t>(i)].span_len = 1;
    all[static_cast<size_t>(i)].sentence_id = std::to_string(i);
  }
  RngStream a(7, "split"), b(7, "split");
  auto s1 = apply_dev_split(all, std::nullopt, a, 15);
  auto s2 = apply_dev_split(all, std::nullopt, b, 15);
  CHECK(s1.used_fallback);
  CHECK(s1.dev.size() == 15);
  CHECK(s1.train.size() == 25);
  REQUIRE(s1.dev.size() == s2.dev.size());
  for (size_t i = 0; i < s1.dev.size(); ++i)
    CHECK(s1.dev[i].sentence_id == s2.dev[i].sentence_id);
}

TEST_CASE("to_task drops neutral only in binary mode") {
  DatasetSplit split;
  for (int i = 0; i < 6; ++i) {
    TokenizedInstance inst;
    inst.tokens = {"w"};
    inst.span_len = 1;
    inst.label = i % 3 == 0 ? Polarity::positive : (i % 3 == 1 ? Polarity::negative : Polarity::neutral);
    split.test.push_back(inst);
  }
  auto three = to_task(split, TaskMode::three_way);
  CHECK(three.test.size() == 6);
  auto binary = to_task(split, TaskMode::binary);
  CHECK(binary.test.size() == 4);
  for (const auto& inst : binary.test) CHECK(inst.label != Polarity::neutral);
}

TEST_CASE("label indices per task") {
  CHECK(label_index(Polarity::positive, TaskMode::three_way) == 0);
  CHECK(label_index(Polarity::negative, TaskMode::three_way) == 1);
  CHECK(label_index(Polarity::neutral, TaskMode::three_way) == 2);
  CHECK(label_index(Polarity::positive, TaskMode::binary) == 0);
  CHECK(label_index(Polarity::negative, TaskMode::binary) == 1);
  CHECK(num_classes(TaskMode::three_way) == 3);
  CHECK(num_classes(TaskMode::binary) == 2);
}

TEST_CASE("majority agreement: singletons agree, opposite pairs tie") {
  auto mk = [](const std::string& sid, Polarity p) {
    TokenizedInstance inst;
    inst.tokens = {"w"};
    inst.span_len = 1;
    inst.label = p;
    inst.sentence_id = sid;
    return inst;
  };

  std::vector<TokenizedInstance> singles = {mk("a", Polarity::positive), mk("b", Polarity::negative)};
  auto r1 = majority_agreement(singles);
  CHECK(r1.agreeing == 2);
  CHECK(r1.tied == 0);
  CHECK(r1.total == 2);

  std::vector<TokenizedInstance> tied = {mk("s", Polarity::positive), mk("s", Polarity::negative)};
  auto r2 = majority_agreement(tied);
  CHECK(r2.agreeing == 0);
  CHECK(r2.tied == 2);

  std::vector<TokenizedInstance> mixed = {mk("m", Polarity::positive), mk("m", Polarity::positive),
                                          mk("m", Polarity::negative)};
  auto r3 = majority_agreement(mixed);
  CHECK(r3.agreeing == 2);
  CHECK(r3.tied == 0);
  CHECK(r3.total == 3);
}

TEST_CASE("prepared datasets round-trip exactly") {
  TempDir tmp;
  write_text(tmp.file("data.xml"), kSampleXml);
  auto raws = parse_semeval(tmp.file("data.xml"));
  auto instances = tokenize_all(raws);
  REQUIRE(!instances.empty());

  save_instances(tmp.file("inst.jsonl"), instances);
  auto loaded = load_instances(tmp.file("inst.jsonl"));
  CHECK(loaded == instances);

  // serialize -> parse -> serialize is byte-stable
  save_instances(tmp.file("inst2.jsonl"), loaded);
  CHECK(read_file(tmp.file("inst.jsonl")) == read_file(tmp.file("inst2.jsonl")));
}
