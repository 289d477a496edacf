#include "pave/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <utility>

namespace pave {

namespace {

std::string schema_message(std::size_t line, const std::string& field,
                           const std::string& detail) {
  std::ostringstream out;
  out << "line " << line;
  if (!field.empty()) out << ": field '" << field << "'";
  out << ": " << detail;
  return out.str();
}

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x0009:
    case 0x000A:
    case 0x000B:
    case 0x000C:
    case 0x000D:
    case 0x0020:
    case 0x0085:
    case 0x00A0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Decodes one UTF-8 sequence starting at i. Returns false on malformed
// input, in which case the caller consumes a single byte.
bool decode_utf8(std::string_view s, std::size_t i, char32_t& cp,
                 std::size_t& length) {
  const auto byte = [&](std::size_t k) {
    return static_cast<unsigned char>(s[k]);
  };
  const unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    cp = b0;
    length = 1;
    return true;
  }
  std::size_t need = 0;
  char32_t value = 0;
  char32_t min_value = 0;
  if (b0 >= 0xC2 && b0 <= 0xDF) {
    need = 1;
    value = b0 & 0x1F;
    min_value = 0x80;
  } else if (b0 >= 0xE0 && b0 <= 0xEF) {
    need = 2;
    value = b0 & 0x0F;
    min_value = 0x800;
  } else if (b0 >= 0xF0 && b0 <= 0xF4) {
    need = 3;
    value = b0 & 0x07;
    min_value = 0x10000;
  } else {
    return false;
  }
  if (i + need >= s.size()) return false;
  for (std::size_t k = 1; k <= need; ++k) {
    const unsigned char bk = byte(i + k);
    if ((bk & 0xC0) != 0x80) return false;
    value = (value << 6) | (bk & 0x3F);
  }
  if (value < min_value || value > 0x10FFFF) return false;
  if (value >= 0xD800 && value <= 0xDFFF) return false;
  cp = value;
  length = need + 1;
  return true;
}

void check_no_unknown_fields(const nlohmann::json& j,
                             const std::set<std::string>& known,
                             std::size_t line) {
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      throw SchemaError(line, item.key(), "unknown field");
    }
  }
}

std::string require_string(const nlohmann::json& j, const char* field,
                           std::size_t line, bool allow_empty = true) {
  if (!j.contains(field)) throw SchemaError(line, field, "missing");
  const nlohmann::json& value = j.at(field);
  if (!value.is_string()) throw SchemaError(line, field, "must be a string");
  std::string text = value.get<std::string>();
  if (!allow_empty && text.empty()) {
    throw SchemaError(line, field, "must be non-empty");
  }
  return text;
}

std::vector<std::string> string_array(const nlohmann::json& value,
                                      const char* field, std::size_t line) {
  if (!value.is_array()) {
    throw SchemaError(line, field, "must be an array of strings");
  }
  std::vector<std::string> out;
  for (const nlohmann::json& item : value) {
    if (!item.is_string()) {
      throw SchemaError(line, field, "must be an array of strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

int require_count(const nlohmann::json& j, const char* field,
                  std::size_t line) {
  if (!j.contains(field)) throw SchemaError(line, field, "missing");
  const nlohmann::json& value = j.at(field);
  if (!value.is_number_integer() || value.get<long long>() < 0) {
    throw SchemaError(line, field, "must be a non-negative integer");
  }
  return static_cast<int>(value.get<long long>());
}

template <typename Record, typename FromJson>
std::vector<Record> load_jsonl(const std::string& path, FromJson from_json) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Record> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      throw SchemaError(line_number, "", "empty line");
    }
    const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw SchemaError(line_number, "", "not a JSON object");
    }
    records.push_back(from_json(j, line_number));
  }
  if (in.bad()) throw IoError("read failure on " + path);
  return records;
}

template <typename Record, typename ToJson>
void save_jsonl(const std::string& path, const std::vector<Record>& records,
                ToJson to_json) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const Record& record : records) {
    out << to_json(record).dump() << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failure on " + path);
}

void sample_in_place(std::vector<ExampleRecord>& records,
                     const ConvertOptions& options) {
  if (options.sample_n == 0 || records.size() <= options.sample_n) return;
  std::mt19937_64 gen(options.seed);
  // Partial Fisher-Yates with modulo draws so the selection is identical
  // across platforms for a given seed.
  for (std::size_t i = 0; i < options.sample_n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(
                                  gen() % (records.size() - i));
    std::swap(records[i], records[j]);
  }
  records.resize(options.sample_n);
  std::sort(records.begin(), records.end(),
            [](const ExampleRecord& a, const ExampleRecord& b) {
              return a.id < b.id;
            });
}

}  // namespace

SchemaError::SchemaError(std::size_t line, std::string field,
                         const std::string& detail)
    : std::runtime_error(schema_message(line, field, detail)),
      line_(line),
      field_(std::move(field)) {}

const char* to_string(Label label) {
  switch (label) {
    case Label::yes: return "yes";
    case Label::no: return "no";
    case Label::maybe: return "maybe";
    case Label::invalid: return "invalid";
  }
  return "invalid";
}

Label normalize_label(std::string_view text) {
  const auto strippable = [](unsigned char c) {
    return std::isspace(c) || std::ispunct(c);
  };
  while (!text.empty() && strippable(static_cast<unsigned char>(text.front()))) {
    text.remove_prefix(1);
  }
  while (!text.empty() && strippable(static_cast<unsigned char>(text.back()))) {
    text.remove_suffix(1);
  }
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lowered == "yes") return Label::yes;
  if (lowered == "no") return Label::no;
  if (lowered == "maybe") return Label::maybe;
  return Label::invalid;
}

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  std::size_t i = 0;
  while (i < text.size()) {
    char32_t cp = 0;
    std::size_t length = 1;
    bool is_space = false;
    if (decode_utf8(text, i, cp, length)) {
      is_space = is_unicode_space(cp);
    }
    if (is_space) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
    i += length;
  }
  return count;
}

nlohmann::json record_to_json(const ExampleRecord& record) {
  nlohmann::json j = {
      {"id", record.id},
      {"task_kind", to_string(record.task_kind)},
      {"question", record.question},
      {"contexts", record.contexts},
      {"gold", record.gold},
  };
  if (!record.gold_alternatives.empty()) {
    j["gold_alternatives"] = record.gold_alternatives;
  }
  return j;
}

ExampleRecord record_from_json(const nlohmann::json& j, std::size_t line) {
  static const std::set<std::string> known = {
      "id", "task_kind", "question", "contexts", "gold", "gold_alternatives"};
  check_no_unknown_fields(j, known, line);

  ExampleRecord record;
  record.id = require_string(j, "id", line, /*allow_empty=*/false);

  const std::string kind = require_string(j, "task_kind", line);
  const auto parsed_kind = task_kind_from_string(kind);
  if (!parsed_kind) {
    throw SchemaError(line, "task_kind", "must be label3 or span");
  }
  record.task_kind = *parsed_kind;

  record.question = require_string(j, "question", line);

  if (!j.contains("contexts")) throw SchemaError(line, "contexts", "missing");
  record.contexts = string_array(j.at("contexts"), "contexts", line);
  if (record.contexts.empty()) {
    throw SchemaError(line, "contexts", "must be non-empty");
  }

  record.gold = require_string(j, "gold", line, /*allow_empty=*/false);
  if (record.task_kind == TaskKind::label3) {
    const Label label = normalize_label(record.gold);
    if (label == Label::invalid) {
      throw SchemaError(line, "gold", "must normalize to yes, no, or maybe");
    }
    record.gold = to_string(label);
  }

  if (j.contains("gold_alternatives")) {
    record.gold_alternatives =
        string_array(j.at("gold_alternatives"), "gold_alternatives", line);
  }
  return record;
}

nlohmann::json prediction_to_json(const PredictionRecord& record) {
  return {
      {"id", record.id},
      {"variant", record.variant},
      {"predicted", record.predicted},
      {"correct", record.correct},
      {"answer_token_len", record.answer_token_len},
      {"gold_token_len", record.gold_token_len},
  };
}

PredictionRecord prediction_from_json(const nlohmann::json& j,
                                      std::size_t line) {
  static const std::set<std::string> known = {
      "id",      "variant",          "predicted",
      "correct", "answer_token_len", "gold_token_len"};
  check_no_unknown_fields(j, known, line);

  PredictionRecord record;
  record.id = require_string(j, "id", line, /*allow_empty=*/false);
  record.variant = require_string(j, "variant", line);
  if (!variant_from_string(record.variant)) {
    throw SchemaError(line, "variant", "unknown variant name");
  }
  record.predicted = require_string(j, "predicted", line);
  if (!j.contains("correct")) throw SchemaError(line, "correct", "missing");
  if (!j.at("correct").is_boolean()) {
    throw SchemaError(line, "correct", "must be a boolean");
  }
  record.correct = j.at("correct").get<bool>();
  record.answer_token_len = require_count(j, "answer_token_len", line);
  record.gold_token_len = require_count(j, "gold_token_len", line);
  return record;
}

std::vector<ExampleRecord> load_dataset(const std::string& path) {
  std::set<std::string> seen_ids;
  return load_jsonl<ExampleRecord>(
      path, [&seen_ids](const nlohmann::json& j, std::size_t line) {
        ExampleRecord record = record_from_json(j, line);
        if (!seen_ids.insert(record.id).second) {
          throw SchemaError(line, "id", "duplicate id " + record.id);
        }
        return record;
      });
}

void save_dataset(const std::string& path,
                  const std::vector<ExampleRecord>& records) {
  save_jsonl(path, records, record_to_json);
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  return load_jsonl<PredictionRecord>(path, prediction_from_json);
}

void save_predictions(const std::string& path,
                      const std::vector<PredictionRecord>& records) {
  save_jsonl(path, records, prediction_to_json);
}

std::vector<ExampleRecord> convert_pubmedqa(const nlohmann::json& root,
                                            const ConvertOptions& options) {
  if (!root.is_object()) {
    throw SchemaError(0, "", "PubMedQA root must be an object keyed by pmid");
  }
  std::vector<ExampleRecord> records;
  for (const auto& item : root.items()) {
    const nlohmann::json& entry = item.value();
    if (!entry.is_object()) continue;
    if (!entry.contains("QUESTION") || !entry["QUESTION"].is_string()) continue;
    if (!entry.contains("CONTEXTS") || !entry["CONTEXTS"].is_array()) continue;
    if (!entry.contains("final_decision") ||
        !entry["final_decision"].is_string()) {
      continue;
    }
    const Label label =
        normalize_label(entry["final_decision"].get<std::string>());
    if (label == Label::invalid) continue;

    ExampleRecord record;
    record.id = item.key();
    record.task_kind = TaskKind::label3;
    record.question = entry["QUESTION"].get<std::string>();
    for (const nlohmann::json& passage : entry["CONTEXTS"]) {
      if (passage.is_string() && !passage.get<std::string>().empty()) {
        record.contexts.push_back(passage.get<std::string>());
      }
    }
    if (record.contexts.empty() || record.id.empty() ||
        record.question.empty()) {
      continue;
    }
    record.gold = to_string(label);
    records.push_back(std::move(record));
  }
  sample_in_place(records, options);
  return records;
}

std::vector<ExampleRecord> convert_squad(const nlohmann::json& root,
                                         const ConvertOptions& options) {
  if (!root.is_object() || !root.contains("data") ||
      !root["data"].is_array()) {
    throw SchemaError(0, "data", "SQuAD root must contain a data array");
  }
  std::vector<ExampleRecord> records;
  for (const nlohmann::json& article : root["data"]) {
    if (!article.is_object() || !article.contains("paragraphs")) continue;
    for (const nlohmann::json& paragraph : article["paragraphs"]) {
      if (!paragraph.is_object() || !paragraph.contains("context") ||
          !paragraph["context"].is_string() || !paragraph.contains("qas")) {
        continue;
      }
      const std::string context = paragraph["context"].get<std::string>();
      for (const nlohmann::json& qa : paragraph["qas"]) {
        if (!qa.is_object() || !qa.contains("id") || !qa["id"].is_string() ||
            !qa.contains("question") || !qa["question"].is_string() ||
            !qa.contains("answers") || !qa["answers"].is_array() ||
            qa["answers"].empty()) {
          continue;
        }
        ExampleRecord record;
        record.id = qa["id"].get<std::string>();
        record.task_kind = TaskKind::span;
        record.question = qa["question"].get<std::string>();
        record.contexts.push_back(context);
        bool first = true;
        for (const nlohmann::json& answer : qa["answers"]) {
          if (!answer.is_object() || !answer.contains("text") ||
              !answer["text"].is_string()) {
            continue;
          }
          const std::string text = answer["text"].get<std::string>();
          if (text.empty()) continue;
          if (first) {
            record.gold = text;
            first = false;
          } else if (text != record.gold &&
                     std::find(record.gold_alternatives.begin(),
                               record.gold_alternatives.end(),
                               text) == record.gold_alternatives.end()) {
            record.gold_alternatives.push_back(text);
          }
        }
        if (record.gold.empty()) continue;
        records.push_back(std::move(record));
      }
    }
  }
  sample_in_place(records, options);
  return records;
}

}  // namespace pave
