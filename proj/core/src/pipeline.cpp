#include "pave/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <utility>

namespace pave {

namespace {

constexpr const char* kEmptyFactListClass = "EmptyFactList";
constexpr const char* kEmptyDraftClass = "EmptyDraft";
constexpr const char* kScoreParseClass = "ScoreParseFailure";

// Per-example state shared by the variant runners.
struct StageRunner {
  PipelineContext& ctx;
  const PipelineConfig& config;
  AuditTrace& trace;
  std::vector<StageError>& stage_errors;
  int& transport_retries;
  int nominal_calls = 0;

  CompletionResponse call(CompletionRequest request, bool nominal = true) {
    request.temperature = config.temperature;
    request.seed = config.seed;
    if (nominal) {
      trace.prompt_fingerprints.push_back(prompt_fingerprint(request));
      if (config.store_prompts) {
        trace.prompts.push_back(request.system_text + "\n---\n" +
                                request.user_text);
      }
      ++nominal_calls;
    }
    RetryResult result =
        complete_with_retry(ctx.backend, request, ctx.retry, ctx.sleep_ms);
    transport_retries += result.attempts - 1;
    return std::move(result.response);
  }

  FactList decompose(const Question& question, const EvidenceContext& context,
                     bool weighted) {
    const CompletionRequest request = render_decompose(
        ctx.templates, question, context, config.max_facts, weighted);
    CompletionResponse response = call(request);
    try {
      return parse_fact_list(response.text, weighted, config.max_facts).value;
    } catch (const EmptyFactListError&) {
      stage_errors.push_back({Stage::decompose, kEmptyFactListClass});
    }
    response = call(request, /*nominal=*/false);
    try {
      return parse_fact_list(response.text, weighted, config.max_facts).value;
    } catch (const EmptyFactListError&) {
      throw DecompositionFailedError("no facts parsed after one retry for " +
                                     question.id);
    }
  }

  Draft answer_stage(Stage stage, const CompletionRequest& request) {
    CompletionResponse response = call(request);
    try {
      return parse_draft(response.text).value;
    } catch (const EmptyDraftError&) {
      stage_errors.push_back({stage, kEmptyDraftClass});
    }
    response = call(request, /*nominal=*/false);
    return parse_draft(response.text).value;  // second failure propagates
  }

  SupportAssessment score(const CompletionRequest& request) {
    const CompletionResponse response = call(request);
    SupportAssessment support = parse_score(response.text);
    if (!support.parse_ok) {
      stage_errors.push_back({Stage::score, kScoreParseClass});
    }
    return support;
  }
};

// Score/gate/revise tail shared by pave and support_scoring. Returns the
// final answer text; fills trace.support with the initial assessment.
template <typename ScoreRenderer, typename ReviseRenderer>
std::string gated_tail(StageRunner& runner, AuditTrace& trace,
                       const PipelineConfig& config, const Draft& draft,
                       ScoreRenderer&& render_score_req,
                       ReviseRenderer&& render_revise_req) {
  SupportAssessment support = runner.score(render_score_req(draft));
  trace.support = support;

  if (gate(support, config.tau) == FinalizationDecision::Keep) {
    trace.final.was_revised = false;
    return draft.answer;
  }

  Draft current = draft;
  for (int round = 1; round <= config.max_revisions; ++round) {
    current = runner.answer_stage(Stage::revise,
                                  render_revise_req(current, support));
    if (round == config.max_revisions) break;
    support = runner.score(render_score_req(current));
    if (gate(support, config.tau) == FinalizationDecision::Keep) break;
  }
  trace.final.was_revised = true;
  return current.answer;
}

struct TraceFrame {
  RunOutcome outcome;
  StageRunner runner;

  TraceFrame(const Question& question, const PipelineConfig& config,
             PipelineContext& ctx)
      : runner{ctx,
               config,
               outcome.trace,
               outcome.stage_errors,
               outcome.transport_retries} {
    outcome.trace.question_id = question.id;
    outcome.trace.variant = config.variant;
    outcome.trace.tau_used = config.tau;
    outcome.trace.started_at = now_timestamp_utc();
  }

  RunOutcome finish(std::string final_text) {
    outcome.trace.final.text = std::move(final_text);
    outcome.trace.final.backend_calls = runner.nominal_calls;
    outcome.trace.ended_at = now_timestamp_utc();
    outcome.final = outcome.trace.final;
    return std::move(outcome);
  }
};

}  // namespace

RunOutcome run_pave(const Question& question, const EvidenceContext& context,
                    TaskKind kind, const PipelineConfig& config,
                    PipelineContext& ctx) {
  TraceFrame frame(question, config, ctx);
  AuditTrace& trace = frame.outcome.trace;

  trace.facts = frame.runner.decompose(question, context, /*weighted=*/false);
  trace.draft = frame.runner.answer_stage(
      Stage::draft, render_draft(ctx.templates, question, trace.facts, kind));

  std::string final_text = gated_tail(
      frame.runner, trace, config, trace.draft,
      [&](const Draft& d) {
        return render_score(ctx.templates, question, trace.facts, d);
      },
      [&](const Draft& d, const SupportAssessment& s) {
        return render_revise(ctx.templates, question, trace.facts, d, s, kind);
      });
  return frame.finish(std::move(final_text));
}

RunOutcome run_baseline(const Question& question,
                        const EvidenceContext& context, TaskKind kind,
                        const PipelineConfig& config, PipelineContext& ctx) {
  TraceFrame frame(question, config, ctx);
  AuditTrace& trace = frame.outcome.trace;

  trace.draft = frame.runner.answer_stage(
      Stage::draft, render_draft(ctx.templates, question, context, kind));
  trace.final.was_revised = false;
  return frame.finish(trace.draft.answer);
}

RunOutcome run_support_scoring(const Question& question,
                               const EvidenceContext& context, TaskKind kind,
                               const PipelineConfig& config,
                               PipelineContext& ctx) {
  TraceFrame frame(question, config, ctx);
  AuditTrace& trace = frame.outcome.trace;

  trace.draft = frame.runner.answer_stage(
      Stage::draft, render_draft(ctx.templates, question, context, kind));

  std::string final_text = gated_tail(
      frame.runner, trace, config, trace.draft,
      [&](const Draft& d) {
        return render_score(ctx.templates, question, context, d);
      },
      [&](const Draft& d, const SupportAssessment& s) {
        return render_revise(ctx.templates, question, context, d, s, kind);
      });
  return frame.finish(std::move(final_text));
}

RunOutcome run_importance_weighting(const Question& question,
                                    const EvidenceContext& context,
                                    TaskKind kind, const PipelineConfig& config,
                                    PipelineContext& ctx) {
  TraceFrame frame(question, config, ctx);
  AuditTrace& trace = frame.outcome.trace;

  trace.facts = frame.runner.decompose(question, context, /*weighted=*/true);
  trace.draft = frame.runner.answer_stage(
      Stage::draft, render_draft(ctx.templates, question, trace.facts, kind));
  trace.final.was_revised = false;
  return frame.finish(trace.draft.answer);
}

RunOutcome run_example(const ExampleRecord& record,
                       const PipelineConfig& config, PipelineContext& ctx) {
  const Question question{record.id, record.question};
  const EvidenceContext context{record.contexts};
  switch (config.variant) {
    case Variant::baseline:
      return run_baseline(question, context, record.task_kind, config, ctx);
    case Variant::importance_weighting:
      return run_importance_weighting(question, context, record.task_kind,
                                      config, ctx);
    case Variant::support_scoring:
      return run_support_scoring(question, context, record.task_kind, config,
                                 ctx);
    case Variant::pave:
      return run_pave(question, context, record.task_kind, config, ctx);
  }
  throw std::logic_error("unhandled variant");
}

JsonlTraceSink::JsonlTraceSink(const std::string& path)
    : path_(path), out_(path, std::ios::trunc) {
  if (!out_) throw IoError("cannot open trace file " + path);
}

void JsonlTraceSink::append(const AuditTrace& trace) {
  const std::string line = trace_to_jsonl(trace);
  std::lock_guard<std::mutex> lock(mutex_);
  out_ << line << '\n';
  out_.flush();
  if (!out_) throw IoError("write failure on trace file " + path_);
}

void VectorTraceSink::append(const AuditTrace& trace) {
  std::lock_guard<std::mutex> lock(mutex_);
  traces_.push_back(trace);
}

std::vector<AuditTrace> VectorTraceSink::traces() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return traces_;
}

RunSummary run_dataset(const std::vector<ExampleRecord>& records,
                       const PipelineConfig& config, PipelineContext& ctx,
                       int parallelism, TraceSink* sink,
                       const ExampleCallback& callback) {
  if (parallelism < 1) {
    throw std::invalid_argument("parallelism must be at least 1");
  }
  const auto config_problems = config.validate();
  if (!config_problems.empty()) {
    throw std::invalid_argument("invalid pipeline config: " +
                                config_problems.front());
  }

  RunSummary summary;
  const long calls_before = ctx.backend.calls_made();

  std::mutex emit_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> aborted{false};
  std::exception_ptr abort_error;

  const auto process_one = [&](std::size_t index) {
    const ExampleRecord& record = records[index];
    RunOutcome outcome;
    std::string error_message;
    bool ok = true;
    try {
      outcome = run_example(record, config, ctx);
    } catch (const std::exception& e) {
      ok = false;
      error_message = e.what();
    }

    std::lock_guard<std::mutex> lock(emit_mutex);
    // Sink and callback failures are fatal: rethrown to the caller below.
    if (ok) {
      if (sink) sink->append(outcome.trace);
      ++summary.completed;
      if (outcome.final.was_revised) ++summary.revised;
      for (const StageError& se : outcome.stage_errors) {
        if (se.error_class != kScoreParseClass) ++summary.retries;
      }
      summary.retries += outcome.transport_retries;
    } else {
      ++summary.failed;
      summary.failure_messages.push_back(record.id + ": " + error_message);
    }
    if (callback) {
      callback(index, record, ok ? &outcome : nullptr, error_message);
    }
  };

  if (parallelism == 1) {
    for (std::size_t i = 0; i < records.size(); ++i) process_one(i);
  } else {
    const auto worker = [&] {
      while (!aborted.load(std::memory_order_relaxed)) {
        const std::size_t index = next.fetch_add(1);
        if (index >= records.size()) return;
        try {
          process_one(index);
        } catch (...) {
          bool expected = false;
          if (aborted.compare_exchange_strong(expected, true)) {
            abort_error = std::current_exception();
          }
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    const std::size_t workers = std::min<std::size_t>(
        static_cast<std::size_t>(parallelism), std::max<std::size_t>(records.size(), 1));
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (abort_error) std::rethrow_exception(abort_error);
  }

  summary.total_backend_calls = ctx.backend.calls_made() - calls_before;
  return summary;
}

}  // namespace pave
