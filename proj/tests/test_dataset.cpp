#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pave/dataset.hpp"

using namespace pave;

namespace {

std::filesystem::path temp_file(const std::string& name,
                                const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << body;
  out.close();
  return path;
}

const char* kValidTwoLines =
    R"({"id": "pm1", "task_kind": "label3", "question": "Does X work?", "contexts": ["Ctx one."], "gold": "yes"})"
    "\n"
    R"({"id": "sq1", "task_kind": "span", "question": "Where?", "contexts": ["In Lyon."], "gold": "Lyon", "gold_alternatives": ["the city of Lyon"]})"
    "\n";

ExampleRecord span_record(const std::string& id) {
  ExampleRecord r;
  r.id = id;
  r.task_kind = TaskKind::span;
  r.question = "Where was it signed?";
  r.contexts = {"Signed in Paris.", "Later ratified."};
  r.gold = "Paris";
  r.gold_alternatives = {"in Paris"};
  return r;
}

// Byte-sequence oracle: the UTF-8 encodings of every separator the counter
// must honor, matched longest first at each byte offset.
std::size_t oracle_space_len(std::string_view s, std::size_t i) {
  static const std::vector<std::string> seqs = {
      "\xe1\x9a\x80",  // U+1680
      "\xe2\x80\x80", "\xe2\x80\x81", "\xe2\x80\x82", "\xe2\x80\x83",
      "\xe2\x80\x84", "\xe2\x80\x85", "\xe2\x80\x86", "\xe2\x80\x87",
      "\xe2\x80\x88", "\xe2\x80\x89", "\xe2\x80\x8a",  // U+2000..200A
      "\xe2\x80\xa8", "\xe2\x80\xa9", "\xe2\x80\xaf",  // U+2028/2029/202F
      "\xe2\x81\x9f",                                  // U+205F
      "\xe3\x80\x80",                                  // U+3000
      "\xc2\x85", "\xc2\xa0",                          // U+0085, U+00A0
      "\x09", "\x0a", "\x0b", "\x0c", "\x0d", "\x20",
  };
  for (const std::string& seq : seqs) {
    if (s.size() - i >= seq.size() && s.compare(i, seq.size(), seq) == 0) {
      return seq.size();
    }
  }
  return 0;
}

std::size_t oracle_token_count(std::string_view s) {
  std::size_t count = 0;
  bool in_word = false;
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t space = oracle_space_len(s, i);
    if (space > 0) {
      in_word = false;
      i += space;
    } else {
      if (!in_word) ++count;
      in_word = true;
      ++i;
    }
  }
  return count;
}

std::string random_bytes(std::mt19937& gen) {
  static const std::vector<std::string> chunks = {
      " ",        "\t",       "\n",           "\xc2\xa0", "\xe2\x80\x89",
      "\xe3\x80\x80", "\xe2\x80\xa8", "a",    "word",     "\xc3\xa9",
      "\xe4\xb8\xad", "\xf0\x9f\x98\x80",     "\xc2",     "\x80",
      "\xff",     "\xe2\x80", "\xf0\x28",     "x y",      "",
  };
  std::uniform_int_distribution<int> count(0, 20);
  std::uniform_int_distribution<std::size_t> pick(0, chunks.size() - 1);
  std::uniform_int_distribution<int> raw(0, 255);
  std::uniform_int_distribution<int> mode(0, 5);
  std::string out;
  const int n = count(gen);
  for (int i = 0; i < n; ++i) {
    if (mode(gen) == 0) {
      out.push_back(static_cast<char>(raw(gen)));
    } else {
      out += chunks[pick(gen)];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("a valid dataset file loads field for field") {
  const auto path = temp_file("pave_ds_valid.jsonl", kValidTwoLines);
  const auto records = load_dataset(path.string());
  REQUIRE(records.size() == 2);
  CHECK(records[0].id == "pm1");
  CHECK(records[0].task_kind == TaskKind::label3);
  CHECK(records[0].question == "Does X work?");
  REQUIRE(records[0].contexts.size() == 1);
  CHECK(records[0].contexts[0] == "Ctx one.");
  CHECK(records[0].gold == "yes");
  CHECK(records[0].gold_alternatives.empty());
  CHECK(records[1].task_kind == TaskKind::span);
  REQUIRE(records[1].gold_alternatives.size() == 1);
  CHECK(records[1].gold_alternatives[0] == "the city of Lyon");
}

TEST_CASE("schema violations name the line and field") {
  SUBCASE("missing question") {
    const auto path = temp_file(
        "pave_ds_noq.jsonl",
        R"({"id": "a", "task_kind": "label3", "contexts": ["c"], "gold": "yes"})"
        "\n");
    try {
      load_dataset(path.string());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.line() == 1);
      CHECK(e.field() == "question");
    }
  }
  SUBCASE("second line carries the error") {
    const auto path = temp_file(
        "pave_ds_line2.jsonl",
        std::string(kValidTwoLines) + "{\"id\": \"x\"}\n");
    try {
      load_dataset(path.string());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("unnormalizable label3 gold") {
    const auto path = temp_file(
        "pave_ds_badgold.jsonl",
        R"({"id": "a", "task_kind": "label3", "question": "q", "contexts": ["c"], "gold": "probably"})"
        "\n");
    try {
      load_dataset(path.string());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.field() == "gold");
    }
  }
  SUBCASE("empty contexts") {
    const auto path = temp_file(
        "pave_ds_noctx.jsonl",
        R"({"id": "a", "task_kind": "span", "question": "q", "contexts": [], "gold": "g"})"
        "\n");
    CHECK_THROWS_AS(load_dataset(path.string()), SchemaError);
  }
  SUBCASE("unknown field") {
    const auto path = temp_file(
        "pave_ds_unknown.jsonl",
        R"({"id": "a", "task_kind": "span", "question": "q", "contexts": ["c"], "gold": "g", "extra": 1})"
        "\n");
    CHECK_THROWS_AS(load_dataset(path.string()), SchemaError);
  }
  SUBCASE("bad task kind") {
    const auto path = temp_file(
        "pave_ds_badkind.jsonl",
        R"({"id": "a", "task_kind": "mc4", "question": "q", "contexts": ["c"], "gold": "g"})"
        "\n");
    try {
      load_dataset(path.string());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.field() == "task_kind");
    }
  }
  SUBCASE("non json line") {
    const auto path = temp_file("pave_ds_notjson.jsonl", "this is not json\n");
    CHECK_THROWS_AS(load_dataset(path.string()), SchemaError);
  }
  SUBCASE("blank interior line") {
    const auto path = temp_file(
        "pave_ds_blank.jsonl", std::string(kValidTwoLines) + "\n");
    CHECK_THROWS_AS(load_dataset(path.string()), SchemaError);
  }
  SUBCASE("duplicate id") {
    const auto path = temp_file(
        "pave_ds_dup.jsonl",
        R"({"id": "a", "task_kind": "span", "question": "q", "contexts": ["c"], "gold": "g"})"
        "\n"
        R"({"id": "a", "task_kind": "span", "question": "q2", "contexts": ["c"], "gold": "g"})"
        "\n");
    try {
      load_dataset(path.string());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.line() == 2);
      CHECK(e.field() == "id");
    }
  }
}

TEST_CASE("missing files raise IoError") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/nowhere.jsonl"), IoError);
  CHECK_THROWS_AS(load_predictions("/nonexistent/nowhere.jsonl"), IoError);
}

TEST_CASE("label3 gold is normalized on load") {
  const auto path = temp_file(
      "pave_ds_norm.jsonl",
      R"({"id": "a", "task_kind": "label3", "question": "q", "contexts": ["c"], "gold": "Maybe."})"
      "\n");
  const auto records = load_dataset(path.string());
  REQUIRE(records.size() == 1);
  CHECK(records[0].gold == "maybe");
}

TEST_CASE("save then load round trips every declared field") {
  std::vector<ExampleRecord> records;
  records.push_back(span_record("s1"));
  ExampleRecord label = span_record("s2");
  label.task_kind = TaskKind::label3;
  label.gold = "no";
  label.gold_alternatives.clear();
  records.push_back(label);

  const auto path =
      std::filesystem::temp_directory_path() / "pave_ds_roundtrip.jsonl";
  save_dataset(path.string(), records);
  const auto loaded = load_dataset(path.string());
  REQUIRE(loaded.size() == records.size());
  CHECK(loaded[0] == records[0]);
  CHECK(loaded[1] == records[1]);
}

TEST_CASE("label normalization matches the advertised rule") {
  CHECK(normalize_label("Yes.") == Label::yes);
  CHECK(normalize_label("  MAYBE") == Label::maybe);
  CHECK(normalize_label("probably") == Label::invalid);
  CHECK(normalize_label("no") == Label::no);
  CHECK(normalize_label("\"No!\"") == Label::no);
  CHECK(normalize_label("") == Label::invalid);
  CHECK(normalize_label("...") == Label::invalid);
  CHECK(normalize_label("yes and no") == Label::invalid);

  for (const char* input : {"Yes.", "  MAYBE", "no", "probably", "?!"}) {
    const Label once = normalize_label(input);
    if (once != Label::invalid) {
      CHECK(normalize_label(to_string(once)) == once);
    }
  }
}

TEST_CASE("token counting follows the advertised examples") {
  CHECK(whitespace_token_count("the Eiffel Tower") == 3);
  CHECK(whitespace_token_count("") == 0);
  CHECK(whitespace_token_count("  a  b ") == 2);
  CHECK(whitespace_token_count("one") == 1);
  CHECK(whitespace_token_count(" \t\n ") == 0);
}

TEST_CASE("token counting honors unicode separators") {
  CHECK(whitespace_token_count("a\xc2\xa0" "b") == 2);        // NBSP
  CHECK(whitespace_token_count("a\xe2\x80\x89" "b") == 2);    // thin space
  CHECK(whitespace_token_count("a\xe3\x80\x80" "b") == 2);    // ideographic
  CHECK(whitespace_token_count("a\xe2\x80\xa8" "b") == 2);    // line separator
  CHECK(whitespace_token_count("a\xc2\x85" "pendix") == 2);   // NEL
  CHECK(whitespace_token_count("a\xe2\x80\x8b") == 1);        // ZWSP is a word char
  CHECK(whitespace_token_count("\xc2\xa0\xe2\x80\x89") == 0);
}

TEST_CASE("invalid utf8 bytes count as word characters") {
  CHECK(whitespace_token_count("\xff\xfe") == 1);
  CHECK(whitespace_token_count("a\xc2") == 1);    // truncated lead glues to a
  CHECK(whitespace_token_count("\xc0\xa0") == 1); // overlong space rejected
  CHECK(whitespace_token_count("\xed\xa0\x80") == 1);  // surrogate rejected
  CHECK(whitespace_token_count("\x80 \x80") == 2);
}

TEST_CASE("token counting agrees with the byte sequence oracle under fuzz") {
  std::mt19937 gen(6174);
  for (int i = 0; i < 2000; ++i) {
    const std::string s = random_bytes(gen);
    CAPTURE(s);
    REQUIRE(whitespace_token_count(s) == oracle_token_count(s));
  }
}

TEST_CASE("prediction logs round trip") {
  std::vector<PredictionRecord> predictions;
  PredictionRecord p;
  p.id = "q1";
  p.variant = "pave";
  p.predicted = "Lyon";
  p.correct = true;
  p.answer_token_len = 1;
  p.gold_token_len = 1;
  predictions.push_back(p);
  p.id = "q2";
  p.variant = "baseline";
  p.predicted = "the treaty of 1902";
  p.correct = false;
  p.answer_token_len = 4;
  p.gold_token_len = 2;
  predictions.push_back(p);

  const auto path =
      std::filesystem::temp_directory_path() / "pave_pred_roundtrip.jsonl";
  save_predictions(path.string(), predictions);
  const auto loaded = load_predictions(path.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0] == predictions[0]);
  CHECK(loaded[1] == predictions[1]);
}

TEST_CASE("prediction validation rejects bad rows") {
  SUBCASE("unknown variant") {
    const auto path = temp_file(
        "pave_pred_badvariant.jsonl",
        R"({"id": "a", "variant": "turbo", "predicted": "x", "correct": true, "answer_token_len": 1, "gold_token_len": 1})"
        "\n");
    try {
      load_predictions(path.string());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.field() == "variant");
    }
  }
  SUBCASE("negative token length") {
    const auto path = temp_file(
        "pave_pred_negtok.jsonl",
        R"({"id": "a", "variant": "pave", "predicted": "x", "correct": true, "answer_token_len": -1, "gold_token_len": 1})"
        "\n");
    CHECK_THROWS_AS(load_predictions(path.string()), SchemaError);
  }
  SUBCASE("non boolean correct") {
    const auto path = temp_file(
        "pave_pred_badbool.jsonl",
        R"({"id": "a", "variant": "pave", "predicted": "x", "correct": "yes", "answer_token_len": 1, "gold_token_len": 1})"
        "\n");
    try {
      load_predictions(path.string());
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.field() == "correct");
    }
  }
}

TEST_CASE("pubmedqa conversion keeps well formed entries only") {
  const nlohmann::json root = nlohmann::json::parse(R"({
    "100": {"QUESTION": "Does A help?", "CONTEXTS": ["ctx a", "ctx b"],
            "final_decision": "Yes"},
    "101": {"QUESTION": "Missing contexts?", "final_decision": "no"},
    "102": {"QUESTION": "Bad label?", "CONTEXTS": ["ctx"],
            "final_decision": "unclear"},
    "103": {"QUESTION": "Empty contexts?", "CONTEXTS": [],
            "final_decision": "no"},
    "104": {"QUESTION": "Maybe case?", "CONTEXTS": ["ctx"],
            "final_decision": "MAYBE."}
  })");
  const auto records = convert_pubmedqa(root, ConvertOptions{});
  REQUIRE(records.size() == 2);
  CHECK(records[0].id == "100");
  CHECK(records[0].task_kind == TaskKind::label3);
  CHECK(records[0].gold == "yes");
  REQUIRE(records[0].contexts.size() == 2);
  CHECK(records[1].id == "104");
  CHECK(records[1].gold == "maybe");
}

TEST_CASE("squad conversion dedupes alternatives and keeps the paragraph") {
  const nlohmann::json root = nlohmann::json::parse(R"({
    "data": [{
      "title": "T",
      "paragraphs": [{
        "context": "The treaty was signed in Paris in 1902.",
        "qas": [
          {"id": "q-1", "question": "Where was the treaty signed?",
           "answers": [{"text": "Paris", "answer_start": 28},
                       {"text": "Paris", "answer_start": 28},
                       {"text": "in Paris", "answer_start": 25}]},
          {"id": "q-2", "question": "No answers?", "answers": []}
        ]
      }]
    }]
  })");
  const auto records = convert_squad(root, ConvertOptions{});
  REQUIRE(records.size() == 1);
  CHECK(records[0].id == "q-1");
  CHECK(records[0].task_kind == TaskKind::span);
  CHECK(records[0].gold == "Paris");
  REQUIRE(records[0].gold_alternatives.size() == 1);
  CHECK(records[0].gold_alternatives[0] == "in Paris");
  REQUIRE(records[0].contexts.size() == 1);
  CHECK(records[0].contexts[0] == "The treaty was signed in Paris in 1902.");
}

TEST_CASE("conversion sampling is deterministic for a fixed seed") {
  nlohmann::json root = nlohmann::json::object();
  for (int i = 0; i < 50; ++i) {
    char key[8];
    std::snprintf(key, sizeof(key), "%03d", i);
    root[key] = {{"QUESTION", "q"},
                 {"CONTEXTS", {"ctx"}},
                 {"final_decision", "yes"}};
  }
  ConvertOptions options;
  options.sample_n = 10;
  options.seed = 99;
  const auto first = convert_pubmedqa(root, options);
  const auto second = convert_pubmedqa(root, options);
  REQUIRE(first.size() == 10);
  REQUIRE(second.size() == 10);
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i] == second[i]);
  }
  for (std::size_t i = 1; i < first.size(); ++i) {
    CHECK(first[i - 1].id < first[i].id);
  }

  ConvertOptions other = options;
  other.seed = 100;
  const auto third = convert_pubmedqa(root, other);
  bool any_difference = false;
  for (std::size_t i = 0; i < third.size(); ++i) {
    if (third[i].id != first[i].id) any_difference = true;
  }
  CHECK(any_difference);
}

TEST_CASE("sampling keeps everything when the corpus is small enough") {
  nlohmann::json root = nlohmann::json::object();
  root["7"] = {{"QUESTION", "q"}, {"CONTEXTS", {"c"}}, {"final_decision", "no"}};
  ConvertOptions options;
  options.sample_n = 10;
  CHECK(convert_pubmedqa(root, options).size() == 1);
}
