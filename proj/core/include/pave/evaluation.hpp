#pragma once

// Metrics over prediction logs: accuracy, relative error reduction, paired
// transition analysis, and answer-length diagnostics.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pave/backend.hpp"
#include "pave/dataset.hpp"
#include "pave/prompting.hpp"

namespace pave {

class EmptyInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PerfectBaselineError : public std::runtime_error {
 public:
  PerfectBaselineError()
      : std::runtime_error(
            "relative error reduction undefined at baseline accuracy 100") {}
};

class IdMismatchError : public std::runtime_error {
 public:
  IdMismatchError(std::vector<std::string> only_in_a,
                  std::vector<std::string> only_in_b);
  const std::vector<std::string>& only_in_a() const { return only_in_a_; }
  const std::vector<std::string>& only_in_b() const { return only_in_b_; }

 private:
  std::vector<std::string> only_in_a_;
  std::vector<std::string> only_in_b_;
};

enum class JudgeMode { normalized, model_judge };

const char* to_string(JudgeMode mode);
std::optional<JudgeMode> judge_mode_from_string(std::string_view name);

struct EvalResult {
  std::string variant;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy_pct = 0.0;  // 100*correct/n rounded half-up to 2 decimals
};

struct TransitionMatrix {
  std::size_t both_correct = 0;
  std::size_t a_only_correct = 0;  // errors B introduced
  std::size_t b_only_correct = 0;  // errors B corrected
  std::size_t both_wrong = 0;
  // 100*(errors_a - errors_b)/errors_a, 1 decimal; absent when A had no errors.
  std::optional<double> error_reduction_pct;

  std::size_t n() const {
    return both_correct + a_only_correct + b_only_correct + both_wrong;
  }
};

struct BucketStat {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy_pct = 0.0;  // 1 decimal
};

struct LengthStats {
  double median_pred_tokens = 0.0;
  double median_gold_tokens = 0.0;
  // Gold-length buckets "1-2", "3-4", "5+"; only populated buckets appear.
  std::map<std::string, BucketStat> buckets;
};

// Half-up at `decimals` places; ties go toward positive infinity.
double round_half_up(double value, int decimals);
std::string format_fixed(double value, int decimals);

bool judge_label3(std::string_view predicted, std::string_view gold);

// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
// whitespace.
std::string normalize_span(std::string_view text);

// normalized mode compares normalized strings against gold and every
// alternative. model_judge asks the backend for a yes/no equivalence verdict
// and treats anything but a parsable yes as false.
bool judge_span(std::string_view predicted, std::string_view gold,
                const std::vector<std::string>& alternatives, JudgeMode mode,
                Backend* backend = nullptr,
                const TemplateSet* templates = nullptr);

// Task-kind dispatch over a dataset record.
bool judge_example(const ExampleRecord& example, std::string_view predicted,
                   JudgeMode mode, Backend* backend = nullptr,
                   const TemplateSet* templates = nullptr);

EvalResult accuracy(const std::vector<PredictionRecord>& predictions);

double relative_error_reduction(double baseline_acc_pct, double new_acc_pct);

// Requires identical id sets; the symmetric difference is an error.
TransitionMatrix paired_transition(const std::vector<PredictionRecord>& preds_a,
                                   const std::vector<PredictionRecord>& preds_b);

LengthStats length_diagnostics(const std::vector<PredictionRecord>& predictions);

nlohmann::json transition_to_json(const TransitionMatrix& transition);
nlohmann::json length_stats_to_json(const LengthStats& stats);

struct ReportRow {
  std::string dataset;
  std::string judge_mode;
  EvalResult result;
};

nlohmann::json build_report(const std::vector<ReportRow>& rows,
                            const std::optional<TransitionMatrix>& transition,
                            const std::optional<LengthStats>& lengths);

// Aligned plain-text table over the same rows.
std::string render_report_table(const std::vector<ReportRow>& rows);

// Writes build_report output as a single JSON document.
void emit_report(const std::vector<ReportRow>& rows,
                 const std::optional<TransitionMatrix>& transition,
                 const std::optional<LengthStats>& lengths,
                 const std::string& path);

}  // namespace pave
