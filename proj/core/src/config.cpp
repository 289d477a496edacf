#include "pave/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pave/dataset.hpp"
#include "pave/evaluation.hpp"

namespace pave {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

bool parse_double(std::string_view text, double& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && !text.empty();
}

bool parse_int(std::string_view text, long& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && !text.empty();
}

bool parse_bool(std::string_view text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
    return true;
  }
  if (text == "false" || text == "0") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

PipelineConfig CliConfig::to_pipeline_config() const {
  PipelineConfig config;
  config.tau = tau;
  config.variant = variant_from_string(variant).value_or(Variant::pave);
  config.max_facts = max_facts;
  config.max_revisions = max_revisions;
  config.temperature = temperature;
  config.seed = seed;
  config.store_prompts = store_prompts;
  return config;
}

std::vector<std::string> CliConfig::validate(bool for_run) const {
  std::vector<std::string> problems;
  if (!variant_from_string(variant)) {
    problems.push_back("variant must be one of baseline, importance_weighting, "
                       "support_scoring, pave");
  }
  if (!judge_mode_from_string(judge)) {
    problems.push_back("judge must be normalized or model_judge");
  }
  if (backend != "scripted" && backend != "live") {
    problems.push_back("backend must be scripted or live");
  }
  if (parallelism < 1) problems.push_back("parallelism must be at least 1");

  for (const std::string& problem : to_pipeline_config().validate()) {
    problems.push_back(problem);
  }

  if (for_run) {
    if (dataset.empty()) problems.push_back("dataset path required (--dataset)");
    if (traces.empty()) problems.push_back("trace path required (--traces)");
    if (predictions.empty()) {
      problems.push_back("prediction path required (--predictions)");
    }
    if (backend == "scripted" && script.empty()) {
      problems.push_back("scripted backend needs a response file (--script)");
    }
    if (backend == "live" && model.empty()) {
      problems.push_back("live backend needs a model name (--model)");
    }
    if (backend == "live" && base_url.empty()) {
      problems.push_back("live backend needs a base URL (--base-url)");
    }
  }
  return problems;
}

std::string apply_config_value(CliConfig& config, std::string_view key,
                               std::string_view value) {
  const std::string value_str(value);
  const auto bad = [&](const char* expected) {
    return "value '" + value_str + "' for key '" + std::string(key) +
           "' is not " + expected;
  };

  if (key == "variant") { config.variant = value_str; return {}; }
  if (key == "backend") { config.backend = value_str; return {}; }
  if (key == "base_url") { config.base_url = value_str; return {}; }
  if (key == "model") { config.model = value_str; return {}; }
  if (key == "template_dir") { config.template_dir = value_str; return {}; }
  if (key == "script") { config.script = value_str; return {}; }
  if (key == "dataset") { config.dataset = value_str; return {}; }
  if (key == "traces") { config.traces = value_str; return {}; }
  if (key == "predictions") { config.predictions = value_str; return {}; }
  if (key == "report") { config.report = value_str; return {}; }
  if (key == "judge") { config.judge = value_str; return {}; }

  if (key == "tau") {
    double parsed = 0.0;
    if (!parse_double(value, parsed)) return bad("a number");
    config.tau = parsed;
    return {};
  }
  if (key == "temperature") {
    double parsed = 0.0;
    if (!parse_double(value, parsed)) return bad("a number");
    config.temperature = parsed;
    return {};
  }
  if (key == "max_facts") {
    long parsed = 0;
    if (!parse_int(value, parsed)) return bad("an integer");
    config.max_facts = static_cast<int>(parsed);
    return {};
  }
  if (key == "max_revisions") {
    long parsed = 0;
    if (!parse_int(value, parsed)) return bad("an integer");
    config.max_revisions = static_cast<int>(parsed);
    return {};
  }
  if (key == "parallelism") {
    long parsed = 0;
    if (!parse_int(value, parsed)) return bad("an integer");
    config.parallelism = static_cast<int>(parsed);
    return {};
  }
  if (key == "seed") {
    long parsed = 0;
    if (!parse_int(value, parsed)) return bad("an integer");
    config.seed = parsed;
    return {};
  }
  if (key == "store_prompts") {
    bool parsed = false;
    if (!parse_bool(value, parsed)) return bad("a boolean");
    config.store_prompts = parsed;
    return {};
  }
  return "unknown config key '" + std::string(key) + "'";
}

void load_config_file(const std::string& path, CliConfig& config) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::string_view view = line;
    const std::size_t comment = view.find('#');
    if (comment != std::string_view::npos) view = view.substr(0, comment);
    view = trim(view);
    if (view.empty()) continue;
    const std::size_t eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(path + ":" + std::to_string(line_number) +
                                  ": expected 'key = value'");
    }
    const std::string_view key = trim(view.substr(0, eq));
    const std::string_view value = trim(view.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument(path + ":" + std::to_string(line_number) +
                                  ": empty key");
    }
    const std::string problem = apply_config_value(config, key, value);
    if (!problem.empty()) {
      throw std::invalid_argument(path + ":" + std::to_string(line_number) +
                                  ": " + problem);
    }
  }
}

nlohmann::json config_to_json(const CliConfig& config) {
  nlohmann::json j = {
      {"variant", config.variant},
      {"tau", config.tau},
      {"max_facts", config.max_facts},
      {"max_revisions", config.max_revisions},
      {"temperature", config.temperature},
      {"parallelism", config.parallelism},
      {"backend", config.backend},
      {"base_url", config.base_url},
      {"model", config.model},
      {"template_dir", config.template_dir},
      {"script", config.script},
      {"dataset", config.dataset},
      {"traces", config.traces},
      {"predictions", config.predictions},
      {"report", config.report},
      {"judge", config.judge},
      {"store_prompts", config.store_prompts},
  };
  j["seed"] = config.seed ? nlohmann::json(*config.seed) : nlohmann::json(nullptr);
  return j;
}

}  // namespace pave
