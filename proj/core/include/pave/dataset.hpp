#pragma once

// QA records with fixed retrieved contexts, plus the prediction log schema.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pave/model.hpp"

namespace pave {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& detail);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

struct ExampleRecord {
  std::string id;
  TaskKind task_kind = TaskKind::span;
  std::string question;
  std::vector<std::string> contexts;
  std::string gold;
  std::vector<std::string> gold_alternatives;

  bool operator==(const ExampleRecord&) const = default;
};

struct PredictionRecord {
  std::string id;
  std::string variant;
  std::string predicted;
  bool correct = false;
  int answer_token_len = 0;
  int gold_token_len = 0;

  bool operator==(const PredictionRecord&) const = default;
};

enum class Label { yes, no, maybe, invalid };

const char* to_string(Label label);

// Lowercases and strips surrounding whitespace/punctuation before matching.
Label normalize_label(std::string_view text);

// Count of maximal runs separated by unicode whitespace. Bytes that do not
// decode as UTF-8 count as word characters.
std::size_t whitespace_token_count(std::string_view text);

nlohmann::json record_to_json(const ExampleRecord& record);
ExampleRecord record_from_json(const nlohmann::json& j, std::size_t line = 0);

nlohmann::json prediction_to_json(const PredictionRecord& record);
PredictionRecord prediction_from_json(const nlohmann::json& j,
                                      std::size_t line = 0);

// One JSON object per line; any malformed line rejects the whole file.
std::vector<ExampleRecord> load_dataset(const std::string& path);
void save_dataset(const std::string& path,
                  const std::vector<ExampleRecord>& records);

std::vector<PredictionRecord> load_predictions(const std::string& path);
void save_predictions(const std::string& path,
                      const std::vector<PredictionRecord>& records);

// Best-effort converters for the public source files.
struct ConvertOptions {
  std::size_t sample_n = 0;  // 0 keeps everything
  std::uint64_t seed = 17;
};

// PubMedQA labeled file: {"<pmid>": {"QUESTION", "CONTEXTS", "final_decision", ...}}.
std::vector<ExampleRecord> convert_pubmedqa(const nlohmann::json& root,
                                            const ConvertOptions& options);

// SQuAD v1.1: {"data": [{"paragraphs": [{"context", "qas": [...]}]}]}.
std::vector<ExampleRecord> convert_squad(const nlohmann::json& root,
                                         const ConvertOptions& options);

}  // namespace pave
