// Domain types for the post-retrieval validation pipeline: question, evidence
// context, atomic fact list, draft, support assessment, gating rule, and the
// audit trace emitted for every completed example.
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace pave {

enum class Variant { baseline, importance_weighting, support_scoring, pave };
enum class TaskKind { label3, span };

const char* to_string(Variant v);
const char* to_string(TaskKind k);
std::optional<Variant> variant_from_string(std::string_view name);
std::optional<TaskKind> task_kind_from_string(std::string_view name);

struct Question {
  std::string id;
  std::string text;
};

struct EvidenceContext {
  std::vector<std::string> passages;

  std::size_t size() const { return passages.size(); }
  bool empty() const { return passages.empty(); }
};

struct AtomicFact {
  int index = 0;  // 1-based
  std::string text;
  std::optional<double> salience;  // populated only by the weighted variant
};

struct FactList {
  std::vector<AtomicFact> facts;

  std::size_t size() const { return facts.size(); }
  bool empty() const { return facts.empty(); }
};

struct Draft {
  std::string answer;
  std::string rationale;  // may be empty when the model omits it
};

struct SupportAssessment {
  double score = 0.0;  // always in [0,1]; 0.0 when parse_ok is false
  bool parse_ok = false;
  std::string raw_text;  // verbatim scorer output
};

struct PipelineConfig {
  double tau = 0.70;
  Variant variant = Variant::pave;
  int max_facts = 16;
  int max_revisions = 1;
  double temperature = 0.0;
  std::optional<long> seed;
  bool store_prompts = false;  // copy full rendered prompts into traces

  // Empty when the configuration is usable; otherwise one message per problem.
  std::vector<std::string> validate() const;
};

struct FinalAnswer {
  std::string text;
  bool was_revised = false;
  int backend_calls = 0;  // stage calls only; parse retries tallied separately
};

struct AuditTrace {
  std::string question_id;
  Variant variant = Variant::pave;
  FactList facts;  // empty for variants without decomposition
  Draft draft;
  std::optional<SupportAssessment> support;  // absent for the baseline variant
  FinalAnswer final;
  double tau_used = 0.0;
  std::string started_at;  // ISO 8601 UTC
  std::string ended_at;
  std::vector<std::string> prompt_fingerprints;
  std::vector<std::string> prompts;  // filled only when store_prompts is set
  int schema_version = 1;
};

enum class FinalizationDecision { Keep, Revise };

// Keep iff support.score >= tau. Total for any tau; the inclusive boundary
// means tau = 0 never revises and tau above 1 always revises.
FinalizationDecision gate(const SupportAssessment& support, double tau);

// Checks every per-variant trace invariant. Violations are data, not errors:
// an empty list means the trace is well-formed for config.variant.
std::vector<std::string> validate_trace(const AuditTrace& trace,
                                        const PipelineConfig& config);

double clamp01(double value);

// Stable content hash used for prompt fingerprints.
std::uint64_t fnv1a64(std::string_view data);
std::string content_fingerprint(std::string_view system_text,
                                std::string_view user_text);

std::string format_timestamp_utc(std::chrono::system_clock::time_point tp);
std::string now_timestamp_utc();

// JSONL schema, field names fixed: question_id, variant, facts, draft,
// support, final, tau_used, started_at, ended_at, prompt_fingerprints,
// schema_version. "support" is omitted when absent; "prompts" appears only
// when prompt storage was enabled.
nlohmann::json trace_to_json(const AuditTrace& trace);
AuditTrace trace_from_json(const nlohmann::json& j);
std::string trace_to_jsonl(const AuditTrace& trace);

}  // namespace pave
