// Renders the stage prompts (decompose, draft, score, revise, judge) and
// parses their structured outputs. Templates are plain text with
// {{placeholder}} markers; a built-in set is compiled in and a directory of
// <stage>.txt files can replace it.
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pave/backend.hpp"
#include "pave/model.hpp"

namespace pave {

enum class Stage { decompose, draft, score, revise, judge };

const char* to_string(Stage stage);

struct PromptTemplate {
  Stage stage = Stage::decompose;
  std::string system_text;
  std::string user_text;
};

struct TemplateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One file per stage (<stage>.txt); text above the first line equal to "---"
// is the system prompt, the remainder the user prompt. Placeholders each
// stage requires must be present; unknown placeholder names are rejected.
class TemplateSet {
 public:
  static TemplateSet builtin();
  static TemplateSet load_from_directory(const std::string& dir);

  const PromptTemplate& get(Stage stage) const;

 private:
  TemplateSet() = default;
  void validate() const;

  std::vector<PromptTemplate> templates_;
};

template <typename T>
struct ParseOutcome {
  T value;
  std::vector<std::string> warnings;  // nonempty whenever lenient recovery ran
};

struct EmptyFactListError : std::runtime_error {
  EmptyFactListError() : std::runtime_error("no fact line parsed") {}
};

struct EmptyDraftError : std::runtime_error {
  EmptyDraftError() : std::runtime_error("draft output is blank") {}
};

CompletionRequest render_decompose(const TemplateSet& templates,
                                   const Question& question,
                                   const EvidenceContext& context,
                                   int max_facts, bool weighted);

CompletionRequest render_draft(const TemplateSet& templates,
                               const Question& question, const FactList& facts,
                               TaskKind kind);
CompletionRequest render_draft(const TemplateSet& templates,
                               const Question& question,
                               const EvidenceContext& context, TaskKind kind);

CompletionRequest render_score(const TemplateSet& templates,
                               const Question& question, const FactList& facts,
                               const Draft& draft);
CompletionRequest render_score(const TemplateSet& templates,
                               const Question& question,
                               const EvidenceContext& context,
                               const Draft& draft);

CompletionRequest render_revise(const TemplateSet& templates,
                                const Question& question,
                                const FactList& facts, const Draft& draft,
                                const SupportAssessment& support,
                                TaskKind kind);
CompletionRequest render_revise(const TemplateSet& templates,
                                const Question& question,
                                const EvidenceContext& context,
                                const Draft& draft,
                                const SupportAssessment& support,
                                TaskKind kind);

CompletionRequest render_judge(const TemplateSet& templates,
                               std::string_view gold,
                               const std::vector<std::string>& alternatives,
                               std::string_view predicted);

// Accepts "N. fact" / "N) fact" lines, optionally ending in a bracketed
// salience "[w]". Markers are stripped, facts reindexed 1..n, extra lines
// beyond max_facts truncated with a warning, weights clamped into [0,1] with
// a warning. Throws EmptyFactListError when no line parses.
ParseOutcome<FactList> parse_fact_list(const std::string& text, bool weighted,
                                       int max_facts);

// Extracts the ANSWER line (required) and RATIONALE body (optional, warned
// when absent). Without an ANSWER marker the whole trimmed text becomes the
// answer, with a warning. Throws EmptyDraftError on blank input.
ParseOutcome<Draft> parse_draft(const std::string& text);

// Total: finds the last SUPPORT: line (or a bare value as the entire output),
// accepts decimals and fractions a/b with b > 0, clamps into [0,1]. Any
// failure yields score 0.0 with parse_ok = false and the raw text preserved.
SupportAssessment parse_score(const std::string& text);

std::string prompt_fingerprint(const CompletionRequest& request);

}  // namespace pave
