#pragma once

// Stage orchestration for the four ablation variants, plus the dataset
// runner and trace sinks.

#include <cstddef>
#include <fstream>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "pave/backend.hpp"
#include "pave/dataset.hpp"
#include "pave/model.hpp"
#include "pave/prompting.hpp"

namespace pave {

class DecompositionFailedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A stage-level failure the pipeline recovered from (parse retry or the
// conservative score fallback). Entries never cover clean first-try parses.
struct StageError {
  Stage stage = Stage::decompose;
  std::string error_class;
};

struct RunOutcome {
  FinalAnswer final;
  AuditTrace trace;
  std::vector<StageError> stage_errors;
  int transport_retries = 0;  // extra attempts consumed by backend retries
};

struct PipelineContext {
  Backend& backend;
  const TemplateSet& templates;
  RetryPolicy retry;
  std::function<void(int)> sleep_ms;  // test hook for retry backoff
};

// decompose -> draft(F) -> score(F) -> gate -> optional revise.
RunOutcome run_pave(const Question& question, const EvidenceContext& context,
                    TaskKind kind, const PipelineConfig& config,
                    PipelineContext& ctx);

// Single draft from the raw context.
RunOutcome run_baseline(const Question& question,
                        const EvidenceContext& context, TaskKind kind,
                        const PipelineConfig& config, PipelineContext& ctx);

// draft(C) -> score(C) -> gate -> optional revise, no decomposition.
RunOutcome run_support_scoring(const Question& question,
                               const EvidenceContext& context, TaskKind kind,
                               const PipelineConfig& config,
                               PipelineContext& ctx);

// Weighted decompose -> draft(F); no scoring or revision.
RunOutcome run_importance_weighting(const Question& question,
                                    const EvidenceContext& context,
                                    TaskKind kind, const PipelineConfig& config,
                                    PipelineContext& ctx);

// Dispatches on config.variant.
RunOutcome run_example(const ExampleRecord& record,
                       const PipelineConfig& config, PipelineContext& ctx);

class TraceSink {
 public:
  virtual ~TraceSink() = default;
  // Must be callable from multiple worker threads.
  virtual void append(const AuditTrace& trace) = 0;
};

class JsonlTraceSink : public TraceSink {
 public:
  explicit JsonlTraceSink(const std::string& path);
  void append(const AuditTrace& trace) override;

 private:
  std::string path_;
  std::ofstream out_;
  std::mutex mutex_;
};

class VectorTraceSink : public TraceSink {
 public:
  void append(const AuditTrace& trace) override;
  std::vector<AuditTrace> traces() const;

 private:
  std::vector<AuditTrace> traces_;
  mutable std::mutex mutex_;
};

struct RunSummary {
  long long completed = 0;
  long long failed = 0;
  long long revised = 0;
  long long total_backend_calls = 0;  // from the backend's own counter
  long long retries = 0;              // parse retries + transport retries
  std::vector<std::string> failure_messages;
};

// Called once per record, serialized across workers. outcome is null when the
// example failed; error_message is empty when it completed.
using ExampleCallback =
    std::function<void(std::size_t index, const ExampleRecord& record,
                       const RunOutcome* outcome,
                       const std::string& error_message)>;

// Runs every record through config.variant with at most `parallelism`
// examples in flight. Traces stream to the sink as examples finish; with
// parallelism=1 that is input order. Sink or callback failures abort the
// run; per-example pipeline failures are tallied in the summary instead.
RunSummary run_dataset(const std::vector<ExampleRecord>& records,
                       const PipelineConfig& config, PipelineContext& ctx,
                       int parallelism, TraceSink* sink,
                       const ExampleCallback& callback = {});

}  // namespace pave
