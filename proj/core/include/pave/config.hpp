#pragma once

// Merged CLI configuration: built-in defaults, overridden by a key=value
// config file, overridden by command-line flags.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pave/model.hpp"

namespace pave {

struct CliConfig {
  std::string variant = "pave";
  double tau = 0.70;
  int max_facts = 16;
  int max_revisions = 1;
  double temperature = 0.0;
  std::optional<long> seed;
  int parallelism = 1;
  std::string backend = "scripted";  // scripted | live
  std::string base_url = "https://api.openai.com/v1";
  std::string model;
  std::string template_dir;  // empty selects the built-in templates
  std::string script;        // scripted backend response file
  std::string dataset;
  std::string traces = "traces.jsonl";
  std::string predictions = "predictions.jsonl";
  std::string report = "report.json";
  std::string judge = "normalized";  // normalized | model_judge
  bool store_prompts = false;

  PipelineConfig to_pipeline_config() const;

  // Empty when usable. for_run additionally checks the paths and backend
  // wiring that only the run command needs.
  std::vector<std::string> validate(bool for_run) const;
};

// Empty string on success, otherwise a message naming the problem.
std::string apply_config_value(CliConfig& config, std::string_view key,
                               std::string_view value);

// Lines of "key = value"; '#' starts a comment; blank lines ignored.
// Throws IoError on unreadable files, std::invalid_argument with the line
// number on malformed content.
void load_config_file(const std::string& path, CliConfig& config);

nlohmann::json config_to_json(const CliConfig& config);

}  // namespace pave
