#include "pave/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace pave {

namespace {

std::string mismatch_message(const std::vector<std::string>& only_in_a,
                             const std::vector<std::string>& only_in_b) {
  std::ostringstream out;
  out << "prediction logs cover different ids:";
  const auto list = [&out](const char* label,
                           const std::vector<std::string>& ids) {
    if (ids.empty()) return;
    out << ' ' << label << " [";
    for (std::size_t i = 0; i < ids.size() && i < 8; ++i) {
      if (i > 0) out << ", ";
      out << ids[i];
    }
    if (ids.size() > 8) out << ", ...";
    out << ']';
  };
  list("only in A", only_in_a);
  list("only in B", only_in_b);
  return out.str();
}

std::map<std::string, bool> correctness_by_id(
    const std::vector<PredictionRecord>& predictions, const char* log_name) {
  std::map<std::string, bool> out;
  for (const PredictionRecord& p : predictions) {
    if (!out.emplace(p.id, p.correct).second) {
      throw std::invalid_argument(std::string("duplicate id in log ") +
                                  log_name + ": " + p.id);
    }
  }
  return out;
}

double median_of(std::vector<int> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return (static_cast<double>(values[n / 2 - 1]) + values[n / 2]) / 2.0;
}

const char* bucket_for(int gold_tokens) {
  if (gold_tokens <= 2) return "1-2";
  if (gold_tokens <= 4) return "3-4";
  return "5+";
}

nlohmann::json bucket_to_json(const BucketStat& stat) {
  return {{"n", stat.n},
          {"correct", stat.correct},
          {"accuracy_pct", stat.accuracy_pct}};
}

}  // namespace

IdMismatchError::IdMismatchError(std::vector<std::string> only_in_a,
                                 std::vector<std::string> only_in_b)
    : std::runtime_error(mismatch_message(only_in_a, only_in_b)),
      only_in_a_(std::move(only_in_a)),
      only_in_b_(std::move(only_in_b)) {}

const char* to_string(JudgeMode mode) {
  switch (mode) {
    case JudgeMode::normalized: return "normalized";
    case JudgeMode::model_judge: return "model_judge";
  }
  return "normalized";
}

std::optional<JudgeMode> judge_mode_from_string(std::string_view name) {
  if (name == "normalized") return JudgeMode::normalized;
  if (name == "model_judge") return JudgeMode::model_judge;
  return std::nullopt;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::floor(value * scale + 0.5) / scale;
}

std::string format_fixed(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const long long units = static_cast<long long>(std::floor(value * scale + 0.5));
  const bool negative = units < 0;
  unsigned long long magnitude =
      negative ? 0ULL - static_cast<unsigned long long>(units)
               : static_cast<unsigned long long>(units);
  std::string digits = std::to_string(magnitude);
  if (decimals > 0) {
    if (digits.size() <= static_cast<std::size_t>(decimals)) {
      digits.insert(0, static_cast<std::size_t>(decimals) + 1 - digits.size(),
                    '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(decimals), 1, '.');
  }
  return negative ? "-" + digits : digits;
}

bool judge_label3(std::string_view predicted, std::string_view gold) {
  const Label p = normalize_label(predicted);
  const Label g = normalize_label(gold);
  return p != Label::invalid && p == g;
}

std::string normalize_span(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (const char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::ispunct(uc)) continue;
    stripped.push_back(static_cast<char>(std::tolower(uc)));
  }
  std::istringstream words(stripped);
  std::string word;
  std::string out;
  while (words >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

bool judge_span(std::string_view predicted, std::string_view gold,
                const std::vector<std::string>& alternatives, JudgeMode mode,
                Backend* backend, const TemplateSet* templates) {
  if (mode == JudgeMode::normalized) {
    const std::string p = normalize_span(predicted);
    if (p == normalize_span(gold)) return true;
    return std::any_of(alternatives.begin(), alternatives.end(),
                       [&p](const std::string& alt) {
                         return p == normalize_span(alt);
                       });
  }
  if (backend == nullptr || templates == nullptr) {
    throw std::invalid_argument(
        "model_judge mode needs a backend and a template set");
  }
  const CompletionRequest request =
      render_judge(*templates, gold, alternatives, predicted);
  const CompletionResponse response = backend->complete(request);
  return normalize_label(response.text) == Label::yes;
}

bool judge_example(const ExampleRecord& example, std::string_view predicted,
                   JudgeMode mode, Backend* backend,
                   const TemplateSet* templates) {
  if (example.task_kind == TaskKind::label3) {
    return judge_label3(predicted, example.gold);
  }
  return judge_span(predicted, example.gold, example.gold_alternatives, mode,
                    backend, templates);
}

EvalResult accuracy(const std::vector<PredictionRecord>& predictions) {
  if (predictions.empty()) throw EmptyInputError("no predictions to score");
  EvalResult result;
  result.variant = predictions.front().variant;
  result.n = predictions.size();
  for (const PredictionRecord& p : predictions) {
    if (p.correct) ++result.correct;
    if (p.variant != result.variant) result.variant = "mixed";
  }
  result.accuracy_pct = round_half_up(
      100.0 * static_cast<double>(result.correct) / result.n, 2);
  return result;
}

double relative_error_reduction(double baseline_acc_pct, double new_acc_pct) {
  if (baseline_acc_pct >= 100.0) throw PerfectBaselineError();
  return round_half_up(
      100.0 * (new_acc_pct - baseline_acc_pct) / (100.0 - baseline_acc_pct),
      1);
}

TransitionMatrix paired_transition(const std::vector<PredictionRecord>& preds_a,
                                   const std::vector<PredictionRecord>& preds_b) {
  const auto a = correctness_by_id(preds_a, "A");
  const auto b = correctness_by_id(preds_b, "B");

  std::vector<std::string> only_in_a;
  std::vector<std::string> only_in_b;
  for (const auto& [id, correct] : a) {
    if (!b.count(id)) only_in_a.push_back(id);
  }
  for (const auto& [id, correct] : b) {
    if (!a.count(id)) only_in_b.push_back(id);
  }
  if (!only_in_a.empty() || !only_in_b.empty()) {
    throw IdMismatchError(std::move(only_in_a), std::move(only_in_b));
  }

  TransitionMatrix m;
  for (const auto& [id, a_correct] : a) {
    const bool b_correct = b.at(id);
    if (a_correct && b_correct) ++m.both_correct;
    else if (a_correct) ++m.a_only_correct;
    else if (b_correct) ++m.b_only_correct;
    else ++m.both_wrong;
  }
  const std::size_t errors_a = m.b_only_correct + m.both_wrong;
  const std::size_t errors_b = m.a_only_correct + m.both_wrong;
  if (errors_a > 0) {
    m.error_reduction_pct = round_half_up(
        100.0 * (static_cast<double>(errors_a) - static_cast<double>(errors_b)) /
            static_cast<double>(errors_a),
        1);
  }
  return m;
}

LengthStats length_diagnostics(const std::vector<PredictionRecord>& predictions) {
  if (predictions.empty()) throw EmptyInputError("no predictions to analyze");

  std::vector<int> pred_lens;
  std::vector<int> gold_lens;
  pred_lens.reserve(predictions.size());
  gold_lens.reserve(predictions.size());
  std::map<std::string, BucketStat> buckets;
  for (const PredictionRecord& p : predictions) {
    pred_lens.push_back(p.answer_token_len);
    gold_lens.push_back(p.gold_token_len);
    BucketStat& stat = buckets[bucket_for(p.gold_token_len)];
    ++stat.n;
    if (p.correct) ++stat.correct;
  }
  for (auto& [label, stat] : buckets) {
    stat.accuracy_pct = round_half_up(
        100.0 * static_cast<double>(stat.correct) / stat.n, 1);
  }

  LengthStats stats;
  stats.median_pred_tokens = median_of(std::move(pred_lens));
  stats.median_gold_tokens = median_of(std::move(gold_lens));
  stats.buckets = std::move(buckets);
  return stats;
}

nlohmann::json transition_to_json(const TransitionMatrix& transition) {
  nlohmann::json t = {{"both_correct", transition.both_correct},
                      {"a_only_correct", transition.a_only_correct},
                      {"b_only_correct", transition.b_only_correct},
                      {"both_wrong", transition.both_wrong},
                      {"n", transition.n()}};
  t["error_reduction_pct"] = transition.error_reduction_pct
                                 ? nlohmann::json(*transition.error_reduction_pct)
                                 : nlohmann::json(nullptr);
  return t;
}

nlohmann::json length_stats_to_json(const LengthStats& stats) {
  nlohmann::json buckets = nlohmann::json::object();
  for (const auto& [label, stat] : stats.buckets) {
    buckets[label] = bucket_to_json(stat);
  }
  return {{"median_pred_tokens", stats.median_pred_tokens},
          {"median_gold_tokens", stats.median_gold_tokens},
          {"buckets", buckets}};
}

nlohmann::json build_report(const std::vector<ReportRow>& rows,
                            const std::optional<TransitionMatrix>& transition,
                            const std::optional<LengthStats>& lengths) {
  if (rows.empty()) throw EmptyInputError("no evaluation results to report");
  nlohmann::json results = nlohmann::json::array();
  for (const ReportRow& row : rows) {
    results.push_back({{"dataset", row.dataset},
                       {"variant", row.result.variant},
                       {"judge_mode", row.judge_mode},
                       {"n", row.result.n},
                       {"correct", row.result.correct},
                       {"accuracy_pct", row.result.accuracy_pct}});
  }
  nlohmann::json report = {{"schema_version", 1}, {"results", results}};
  if (transition) report["transition"] = transition_to_json(*transition);
  if (lengths) report["length_stats"] = length_stats_to_json(*lengths);
  return report;
}

std::string render_report_table(const std::vector<ReportRow>& rows) {
  if (rows.empty()) throw EmptyInputError("no evaluation results to report");
  static constexpr const char* kHeaders[] = {"dataset", "variant", "judge",
                                             "n", "correct", "accuracy"};
  std::vector<std::array<std::string, 6>> cells;
  for (const ReportRow& row : rows) {
    cells.push_back({row.dataset, row.result.variant, row.judge_mode,
                     std::to_string(row.result.n),
                     std::to_string(row.result.correct),
                     format_fixed(row.result.accuracy_pct, 2)});
  }
  std::array<std::size_t, 6> widths;
  for (std::size_t col = 0; col < 6; ++col) {
    widths[col] = std::string(kHeaders[col]).size();
    for (const auto& row : cells) {
      widths[col] = std::max(widths[col], row[col].size());
    }
  }
  std::ostringstream out;
  const auto emit_row = [&](const std::array<std::string, 6>& row) {
    for (std::size_t col = 0; col < 6; ++col) {
      if (col > 0) out << "  ";
      out << row[col]
          << std::string(widths[col] - row[col].size(), ' ');
    }
    out << '\n';
  };
  emit_row({kHeaders[0], kHeaders[1], kHeaders[2], kHeaders[3], kHeaders[4],
            kHeaders[5]});
  for (const auto& row : cells) emit_row(row);
  return out.str();
}

void emit_report(const std::vector<ReportRow>& rows,
                 const std::optional<TransitionMatrix>& transition,
                 const std::optional<LengthStats>& lengths,
                 const std::string& path) {
  const nlohmann::json report = build_report(rows, transition, lengths);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open report file " + path);
  out << report.dump(2) << '\n';
  out.flush();
  if (!out) throw IoError("write failure on report file " + path);
}

}  // namespace pave
