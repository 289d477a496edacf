// pave: run the validation pipeline over a dataset, evaluate prediction
// logs, compare two runs, and inspect audit traces.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pave/backend.hpp"
#include "pave/config.hpp"
#include "pave/dataset.hpp"
#include "pave/evaluation.hpp"
#include "pave/model.hpp"
#include "pave/pipeline.hpp"
#include "pave/prompting.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct FlagBinding {
  CLI::App* cmd = nullptr;
  std::string config_path;
  pave::CliConfig flags;  // raw flag values before merging
};

// Every pipeline-relevant flag, shared by `run`. Values land in
// binding.flags; merge() applies only the flags the user actually passed.
void add_config_flags(FlagBinding& binding) {
  CLI::App* cmd = binding.cmd;
  cmd->add_option("--config", binding.config_path,
                  "key = value config file applied before flags");
  cmd->add_option("--variant", binding.flags.variant,
                  "baseline | importance_weighting | support_scoring | pave");
  cmd->add_option("--tau", binding.flags.tau, "revision threshold in [0,1]");
  cmd->add_option("--max-facts", binding.flags.max_facts,
                  "fact list cap per example");
  cmd->add_option("--max-revisions", binding.flags.max_revisions,
                  "revision rounds after a low-support draft");
  cmd->add_option("--temperature", binding.flags.temperature,
                  "sampling temperature");
  cmd->add_option("--seed", binding.flags.seed, "backend sampling seed");
  cmd->add_option("--parallelism", binding.flags.parallelism,
                  "examples in flight");
  cmd->add_option("--backend", binding.flags.backend, "scripted | live");
  cmd->add_option("--base-url", binding.flags.base_url,
                  "OpenAI-compatible endpoint base URL");
  cmd->add_option("--model", binding.flags.model, "model name (live backend)");
  cmd->add_option("--template-dir", binding.flags.template_dir,
                  "prompt template directory (default: built-in templates)");
  cmd->add_option("--script", binding.flags.script,
                  "scripted backend response file (JSONL)");
  cmd->add_option("--dataset", binding.flags.dataset, "dataset JSONL path");
  cmd->add_option("--traces", binding.flags.traces, "trace JSONL output path");
  cmd->add_option("--predictions", binding.flags.predictions,
                  "prediction JSONL output path");
  cmd->add_option("--judge", binding.flags.judge,
                  "normalized | model_judge (span correctness)");
  cmd->add_flag("--store-prompts", binding.flags.store_prompts,
                "copy full rendered prompts into traces");
}

// Defaults, then the config file, then explicitly passed flags.
pave::CliConfig merge(const FlagBinding& binding) {
  pave::CliConfig config;
  if (!binding.config_path.empty()) {
    pave::load_config_file(binding.config_path, config);
  }
  const CLI::App* cmd = binding.cmd;
  const auto passed = [&cmd](const char* flag) {
    return cmd->count(flag) > 0;
  };
  if (passed("--variant")) config.variant = binding.flags.variant;
  if (passed("--tau")) config.tau = binding.flags.tau;
  if (passed("--max-facts")) config.max_facts = binding.flags.max_facts;
  if (passed("--max-revisions")) {
    config.max_revisions = binding.flags.max_revisions;
  }
  if (passed("--temperature")) config.temperature = binding.flags.temperature;
  if (passed("--seed")) config.seed = binding.flags.seed;
  if (passed("--parallelism")) config.parallelism = binding.flags.parallelism;
  if (passed("--backend")) config.backend = binding.flags.backend;
  if (passed("--base-url")) config.base_url = binding.flags.base_url;
  if (passed("--model")) config.model = binding.flags.model;
  if (passed("--template-dir")) config.template_dir = binding.flags.template_dir;
  if (passed("--script")) config.script = binding.flags.script;
  if (passed("--dataset")) config.dataset = binding.flags.dataset;
  if (passed("--traces")) config.traces = binding.flags.traces;
  if (passed("--predictions")) config.predictions = binding.flags.predictions;
  if (passed("--judge")) config.judge = binding.flags.judge;
  if (passed("--store-prompts")) {
    config.store_prompts = binding.flags.store_prompts;
  }
  return config;
}

std::optional<pave::BackendErrorClass> error_class_from_string(
    std::string_view name) {
  using EC = pave::BackendErrorClass;
  if (name == "timeout") return EC::timeout;
  if (name == "rate_limited") return EC::rate_limited;
  if (name == "server_error") return EC::server_error;
  if (name == "auth_error") return EC::auth_error;
  return std::nullopt;
}

// Script file: one JSON object per line, {"stage": s, "text": t} or
// {"stage": s, "error": class}. Judge entries feed the judge backend so
// pipeline call counts stay untouched.
void load_script(const std::string& path, pave::ScriptedBackend& pipeline,
                 pave::ScriptedBackend& judge) {
  std::ifstream in(path);
  if (!in) throw pave::IoError("cannot open script file " + path);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("stage") ||
        !j.at("stage").is_string()) {
      throw pave::SchemaError(line_number, "stage",
                              "script line needs a stage name");
    }
    const std::string stage = j.at("stage").get<std::string>();
    pave::ScriptedBackend& target = stage == "judge" ? judge : pipeline;
    if (j.contains("error")) {
      if (!j.at("error").is_string()) {
        throw pave::SchemaError(line_number, "error", "must be a string");
      }
      const auto cls = error_class_from_string(j.at("error").get<std::string>());
      if (!cls) {
        throw pave::SchemaError(line_number, "error",
                                "unknown backend error class");
      }
      target.enqueue_error(stage, *cls);
    } else if (j.contains("text") && j.at("text").is_string()) {
      target.enqueue(stage, j.at("text").get<std::string>());
    } else {
      throw pave::SchemaError(line_number, "text",
                              "script line needs text or error");
    }
  }
}

pave::TemplateSet load_templates(const pave::CliConfig& config) {
  if (config.template_dir.empty()) return pave::TemplateSet::builtin();
  return pave::TemplateSet::load_from_directory(config.template_dir);
}

int report_config_problems(const std::vector<std::string>& problems) {
  for (const std::string& problem : problems) {
    std::cerr << "config error: " << problem << '\n';
  }
  return kExitConfig;
}

int cmd_run(const FlagBinding& binding) {
  const pave::CliConfig config = merge(binding);
  const auto problems = config.validate(/*for_run=*/true);
  if (!problems.empty()) return report_config_problems(problems);
  const auto judge_mode = pave::judge_mode_from_string(config.judge);

  const std::vector<pave::ExampleRecord> records =
      pave::load_dataset(config.dataset);
  const pave::TemplateSet templates = load_templates(config);

  std::unique_ptr<pave::Backend> backend;
  std::unique_ptr<pave::Backend> judge_backend;
  if (config.backend == "scripted") {
    auto scripted = std::make_unique<pave::ScriptedBackend>();
    auto judge_scripted = std::make_unique<pave::ScriptedBackend>();
    load_script(config.script, *scripted, *judge_scripted);
    backend = std::move(scripted);
    judge_backend = std::move(judge_scripted);
  } else {
    const char* key = std::getenv("PAVE_API_KEY");
    if (key == nullptr || *key == '\0') {
      return report_config_problems(
          {"live backend needs PAVE_API_KEY in the environment"});
    }
    pave::HttpBackendConfig http;
    http.base_url = config.base_url;
    http.model = config.model;
    http.api_key = key;
    backend = std::make_unique<pave::HttpBackend>(http);
    judge_backend = std::make_unique<pave::HttpBackend>(http);
  }

  pave::PipelineContext ctx{*backend, templates, pave::RetryPolicy{}, {}};
  pave::JsonlTraceSink sink(config.traces);

  std::vector<pave::PredictionRecord> predictions(records.size());
  const auto on_example = [&](std::size_t index,
                              const pave::ExampleRecord& record,
                              const pave::RunOutcome* outcome,
                              const std::string&) {
    pave::PredictionRecord pred;
    pred.id = record.id;
    pred.variant = config.variant;
    if (outcome != nullptr) {
      pred.predicted = outcome->final.text;
      pred.correct = pave::judge_example(record, pred.predicted, *judge_mode,
                                         judge_backend.get(), &templates);
    }
    pred.answer_token_len = static_cast<int>(
        pave::whitespace_token_count(pred.predicted));
    pred.gold_token_len =
        static_cast<int>(pave::whitespace_token_count(record.gold));
    predictions[index] = std::move(pred);
  };

  const pave::RunSummary summary =
      pave::run_dataset(records, config.to_pipeline_config(), ctx,
                        config.parallelism, &sink, on_example);
  pave::save_predictions(config.predictions, predictions);

  nlohmann::json out = {
      {"completed", summary.completed},
      {"failed", summary.failed},
      {"revised", summary.revised},
      {"total_backend_calls", summary.total_backend_calls},
      {"retries", summary.retries},
      {"traces", config.traces},
      {"predictions", config.predictions},
      {"config", pave::config_to_json(config)},
  };
  if (!summary.failure_messages.empty()) {
    out["failures"] = summary.failure_messages;
  }
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

std::string dataset_label(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

int cmd_eval(const std::vector<std::string>& log_paths,
             const std::string& report_path, const std::string& judge_name) {
  if (!pave::judge_mode_from_string(judge_name)) {
    return report_config_problems({"judge must be normalized or model_judge"});
  }
  std::vector<pave::ReportRow> rows;
  for (const std::string& path : log_paths) {
    const auto predictions = pave::load_predictions(path);
    // One row per variant present in the log, in first-seen order.
    std::vector<std::string> variants;
    for (const auto& p : predictions) {
      if (std::find(variants.begin(), variants.end(), p.variant) ==
          variants.end()) {
        variants.push_back(p.variant);
      }
    }
    if (variants.empty()) {
      throw pave::EmptyInputError("no predictions in " + path);
    }
    for (const std::string& variant : variants) {
      std::vector<pave::PredictionRecord> group;
      for (const auto& p : predictions) {
        if (p.variant == variant) group.push_back(p);
      }
      rows.push_back(
          {dataset_label(path), judge_name, pave::accuracy(group)});
    }
  }
  pave::emit_report(rows, std::nullopt, std::nullopt, report_path);
  std::cout << pave::render_report_table(rows);
  std::cout << "report written to " << report_path << '\n';
  return kExitOk;
}

int cmd_compare(const std::string& path_a, const std::string& path_b,
                const std::string& report_path) {
  const auto preds_a = pave::load_predictions(path_a);
  const auto preds_b = pave::load_predictions(path_b);
  const pave::EvalResult acc_a = pave::accuracy(preds_a);
  const pave::EvalResult acc_b = pave::accuracy(preds_b);
  const pave::TransitionMatrix transition =
      pave::paired_transition(preds_a, preds_b);
  const pave::LengthStats lengths_a = pave::length_diagnostics(preds_a);
  const pave::LengthStats lengths_b = pave::length_diagnostics(preds_b);

  std::cout << "paired transition over " << transition.n() << " ids\n"
            << "  both_correct    " << transition.both_correct << '\n'
            << "  a_only_correct  " << transition.a_only_correct << '\n'
            << "  b_only_correct  " << transition.b_only_correct << '\n'
            << "  both_wrong      " << transition.both_wrong << '\n';
  if (transition.error_reduction_pct) {
    std::cout << "  error_reduction "
              << pave::format_fixed(*transition.error_reduction_pct, 1)
              << "%\n";
  }
  const auto print_lengths = [](const char* label,
                                const pave::LengthStats& stats) {
    std::cout << label << ": median answer tokens "
              << stats.median_pred_tokens << ", median gold tokens "
              << stats.median_gold_tokens << '\n';
    for (const auto& [bucket, stat] : stats.buckets) {
      std::cout << "  gold " << bucket << " tokens: "
                << pave::format_fixed(stat.accuracy_pct, 1) << " ("
                << stat.correct << '/' << stat.n << ")\n";
    }
  };
  std::cout << "A=" << acc_a.variant << " accuracy "
            << pave::format_fixed(acc_a.accuracy_pct, 2) << ", B="
            << acc_b.variant << " accuracy "
            << pave::format_fixed(acc_b.accuracy_pct, 2) << '\n';
  print_lengths("A", lengths_a);
  print_lengths("B", lengths_b);

  if (!report_path.empty()) {
    nlohmann::json report = {
        {"schema_version", 1},
        {"a", {{"log", path_a},
               {"variant", acc_a.variant},
               {"accuracy_pct", acc_a.accuracy_pct},
               {"length_stats", pave::length_stats_to_json(lengths_a)}}},
        {"b", {{"log", path_b},
               {"variant", acc_b.variant},
               {"accuracy_pct", acc_b.accuracy_pct},
               {"length_stats", pave::length_stats_to_json(lengths_b)}}},
        {"transition", pave::transition_to_json(transition)},
    };
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw pave::IoError("cannot open report file " + report_path);
    out << report.dump(2) << '\n';
    if (!out) throw pave::IoError("write failure on " + report_path);
    std::cout << "report written to " << report_path << '\n';
  }
  return kExitOk;
}

int cmd_trace_show(const std::string& trace_path, const std::string& id) {
  std::ifstream in(trace_path);
  if (!in) throw pave::IoError("cannot open trace file " + trace_path);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw pave::SchemaError(line_number, "", "not valid JSON");
    }
    const pave::AuditTrace trace = pave::trace_from_json(j);
    if (trace.question_id != id) continue;

    std::cout << "trace " << trace.question_id << "  variant "
              << pave::to_string(trace.variant) << "  tau "
              << pave::format_fixed(trace.tau_used, 2) << '\n';
    std::cout << "premises:\n";
    if (trace.facts.empty()) {
      std::cout << "  (none — "
                << pave::to_string(trace.variant) << " variant)\n";
    } else {
      for (const pave::AtomicFact& fact : trace.facts.facts) {
        std::cout << "  " << fact.index << ". " << fact.text;
        if (fact.salience) {
          std::cout << " [" << pave::format_fixed(*fact.salience, 2) << ']';
        }
        std::cout << '\n';
      }
    }
    std::cout << "draft: " << trace.draft.answer << '\n';
    if (!trace.draft.rationale.empty()) {
      std::cout << "rationale: " << trace.draft.rationale << '\n';
    }
    if (trace.support) {
      std::cout << "support: "
                << pave::format_fixed(trace.support->score, 2)
                << (trace.support->parse_ok ? "" : " (parse failed, fell back to 0)")
                << '\n';
      const bool keep = pave::gate(*trace.support, trace.tau_used) ==
                        pave::FinalizationDecision::Keep;
      std::cout << "gate: " << (keep ? "keep" : "revise") << " ("
                << pave::format_fixed(trace.support->score, 2)
                << (keep ? " >= " : " < ")
                << pave::format_fixed(trace.tau_used, 2) << ")\n";
    } else {
      std::cout << "support: (not scored)\n";
    }
    std::cout << "final: " << trace.final.text << "  ["
              << (trace.final.was_revised ? "revised" : "kept") << ", "
              << trace.final.backend_calls << " calls]\n";
    return kExitOk;
  }
  std::cerr << "error: no trace with id '" << id << "' in " << trace_path
            << '\n';
  return kExitRuntime;
}

int cmd_convert(const std::string& from, const std::string& input,
                const std::string& output, std::size_t sample_n,
                std::uint64_t seed) {
  std::ifstream in(input);
  if (!in) throw pave::IoError("cannot open " + input);
  nlohmann::json root;
  in >> root;

  pave::ConvertOptions options;
  options.sample_n = sample_n;
  options.seed = seed;
  std::vector<pave::ExampleRecord> records;
  if (from == "pubmedqa") {
    records = pave::convert_pubmedqa(root, options);
  } else if (from == "squad") {
    records = pave::convert_squad(root, options);
  } else {
    return report_config_problems({"--from must be pubmedqa or squad"});
  }
  pave::save_dataset(output, records);
  std::cout << "wrote " << records.size() << " records to " << output << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"post-retrieval answer validation pipeline"};
  app.require_subcommand(1);

  FlagBinding run_binding;
  run_binding.cmd = app.add_subcommand(
      "run", "run a pipeline variant over a dataset");
  add_config_flags(run_binding);

  auto* eval_cmd =
      app.add_subcommand("eval", "score prediction logs into a report");
  std::vector<std::string> eval_logs;
  std::string eval_report = "report.json";
  std::string eval_judge = "normalized";
  eval_cmd->add_option("logs", eval_logs, "prediction JSONL files")
      ->required();
  eval_cmd->add_option("--report", eval_report, "report JSON output path");
  eval_cmd->add_option("--judge", eval_judge,
                       "judge mode recorded in the report");

  auto* compare_cmd = app.add_subcommand(
      "compare", "paired transition analysis of two prediction logs");
  std::string compare_a;
  std::string compare_b;
  std::string compare_report;
  compare_cmd->add_option("log_a", compare_a, "prediction log A")->required();
  compare_cmd->add_option("log_b", compare_b, "prediction log B")->required();
  compare_cmd->add_option("--report", compare_report,
                          "comparison JSON output path");

  auto* trace_cmd = app.add_subcommand("trace", "audit trace utilities");
  trace_cmd->require_subcommand(1);
  auto* show_cmd = trace_cmd->add_subcommand("show", "pretty-print one trace");
  std::string show_traces;
  std::string show_id;
  show_cmd->add_option("--traces", show_traces, "trace JSONL file")
      ->required();
  show_cmd->add_option("id", show_id, "question id")->required();

  auto* convert_cmd = app.add_subcommand(
      "convert", "convert public QA files into the dataset schema");
  std::string convert_from;
  std::string convert_input;
  std::string convert_output;
  std::size_t convert_sample = 0;
  std::uint64_t convert_seed = 17;
  convert_cmd->add_option("--from", convert_from, "pubmedqa | squad")
      ->required();
  convert_cmd->add_option("--input", convert_input, "source JSON file")
      ->required();
  convert_cmd->add_option("--output", convert_output, "dataset JSONL path")
      ->required();
  convert_cmd->add_option("--sample", convert_sample,
                          "keep a seeded random subset of this size");
  convert_cmd->add_option("--seed", convert_seed, "sampling seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_binding.cmd->parsed()) return cmd_run(run_binding);
    if (eval_cmd->parsed()) return cmd_eval(eval_logs, eval_report, eval_judge);
    if (compare_cmd->parsed()) {
      return cmd_compare(compare_a, compare_b, compare_report);
    }
    if (trace_cmd->parsed() && show_cmd->parsed()) {
      return cmd_trace_show(show_traces, show_id);
    }
    if (convert_cmd->parsed()) {
      return cmd_convert(convert_from, convert_input, convert_output,
                         convert_sample, convert_seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  std::cerr << "error: no subcommand selected\n";
  return kExitConfig;
}
