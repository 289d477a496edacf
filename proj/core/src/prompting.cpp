#include "pave/prompting.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pave {

namespace {

constexpr std::array<Stage, 5> kAllStages = {Stage::decompose, Stage::draft,
                                             Stage::score, Stage::revise,
                                             Stage::judge};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

std::size_t find_last_icase(std::string_view haystack, std::string_view needle) {
  if (needle.empty() || haystack.size() < needle.size()) {
    return std::string_view::npos;
  }
  for (std::size_t i = haystack.size() - needle.size() + 1; i-- > 0;) {
    if (starts_with_icase(haystack.substr(i), needle)) return i;
  }
  return std::string_view::npos;
}

// Plain decimal: optional sign, digits with at most one dot. No exponents.
// The sign is handled here because from_chars rejects a leading '+'.
bool scan_decimal(std::string_view s, std::size_t& pos, double& out) {
  std::size_t i = pos;
  bool negative = false;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    negative = s[i] == '-';
    ++i;
  }
  const std::size_t digits_start = i;
  bool saw_digit = false;
  bool saw_dot = false;
  while (i < s.size()) {
    const char c = s[i];
    if (c >= '0' && c <= '9') {
      saw_digit = true;
      ++i;
    } else if (c == '.' && !saw_dot) {
      saw_dot = true;
      ++i;
    } else {
      break;
    }
  }
  if (!saw_digit) return false;
  const std::string token(s.substr(digits_start, i - digits_start));
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) return false;
  out = negative ? -value : value;
  pos = i;
  return true;
}

void skip_spaces(std::string_view s, std::size_t& pos) {
  while (pos < s.size() &&
         std::isspace(static_cast<unsigned char>(s[pos]))) {
    ++pos;
  }
}

// Value expression after a SUPPORT marker (or as the whole output): a decimal
// or a fraction a/b with b > 0.
bool scan_value(std::string_view s, std::size_t& pos, double& out) {
  skip_spaces(s, pos);
  double numerator = 0.0;
  if (!scan_decimal(s, pos, numerator)) return false;
  std::size_t after_num = pos;
  skip_spaces(s, after_num);
  if (after_num < s.size() && s[after_num] == '/') {
    std::size_t denom_pos = after_num + 1;
    skip_spaces(s, denom_pos);
    double denominator = 0.0;
    if (scan_decimal(s, denom_pos, denominator) && denominator > 0.0) {
      out = numerator / denominator;
      pos = denom_pos;
      return true;
    }
    return false;
  }
  out = numerator;
  return true;
}

std::string replace_all(std::string text, std::string_view key,
                        std::string_view value) {
  const std::string marker = "{{" + std::string(key) + "}}";
  std::size_t pos = 0;
  while ((pos = text.find(marker, pos)) != std::string::npos) {
    text.replace(pos, marker.size(), value);
    pos += value.size();
  }
  return text;
}

const std::set<std::string>& placeholders_for(Stage stage) {
  static const std::map<Stage, std::set<std::string>> table = {
      {Stage::decompose,
       {"question", "passages", "max_facts", "weighted_instruction"}},
      {Stage::draft, {"question", "premises", "answer_constraint"}},
      {Stage::score, {"question", "premises", "answer", "rationale_block"}},
      {Stage::revise,
       {"question", "premises", "answer", "rationale_block", "score",
        "answer_constraint"}},
      {Stage::judge, {"gold", "predicted"}},
  };
  return table.at(stage);
}

int default_max_output_tokens(Stage stage) {
  switch (stage) {
    case Stage::decompose: return 1024;
    case Stage::draft: return 256;
    case Stage::score: return 64;
    case Stage::revise: return 256;
    case Stage::judge: return 8;
  }
  return 256;
}

PromptTemplate builtin_template(Stage stage) {
  PromptTemplate t;
  t.stage = stage;
  switch (stage) {
    case Stage::decompose:
      t.system_text =
          "You extract question-conditioned atomic facts from retrieved "
          "evidence. Output only the numbered fact list, nothing else.";
      t.user_text =
          "Question: {{question}}\n"
          "\n"
          "Context:\n"
          "{{passages}}\n"
          "\n"
          "List at most {{max_facts}} atomic facts from the context that are "
          "needed to answer the question. Write one fact per line as "
          "\"N. <fact>\", each a single standalone statement. Keep only "
          "information relevant to the question, and state the main claim, "
          "the relevant condition, and any exception as separate facts."
          "{{weighted_instruction}}";
      break;
    case Stage::draft:
      t.system_text =
          "You answer questions using only the premises you are given.";
      t.user_text =
          "Question: {{question}}\n"
          "\n"
          "Premises:\n"
          "{{premises}}\n"
          "\n"
          "Answer the question using only the premises above. "
          "{{answer_constraint}}Respond in exactly this format:\n"
          "ANSWER: <short answer>\n"
          "RATIONALE: <1-3 sentences>";
      break;
    case Stage::score:
      t.system_text =
          "You assess whether a draft answer is supported by a set of "
          "premises.";
      t.user_text =
          "Question: {{question}}\n"
          "\n"
          "Premises:\n"
          "{{premises}}\n"
          "\n"
          "Draft answer: {{answer}}\n"
          "{{rationale_block}}"
          "\n"
          "Judge whether the draft answer follows directly or is strongly "
          "supported by the premises. 1.0 means fully supported, 0.0 means "
          "contradicted or unsupported. Reply with one final line in exactly "
          "this format:\n"
          "SUPPORT: <decimal in [0,1]>";
      break;
    case Stage::revise:
      t.system_text =
          "You correct draft answers that are not supported by their "
          "premises.";
      t.user_text =
          "Question: {{question}}\n"
          "\n"
          "Premises:\n"
          "{{premises}}\n"
          "\n"
          "Draft answer: {{answer}}\n"
          "{{rationale_block}}"
          "Support score of the draft: {{score}}\n"
          "\n"
          "The draft answer is not sufficiently supported by the premises. "
          "Write a corrected answer that stays strictly within the premises. "
          "If the premises conflict or are inconclusive, it is acceptable to "
          "answer \"maybe\" or state uncertainty. "
          "{{answer_constraint}}Respond in exactly this format:\n"
          "ANSWER: <short answer>\n"
          "RATIONALE: <1-3 sentences>";
      break;
    case Stage::judge:
      t.system_text = "You judge whether two answers are equivalent.";
      t.user_text =
          "Gold answer: {{gold}}\n"
          "Predicted answer: {{predicted}}\n"
          "\n"
          "Do the predicted answer and the gold answer name the same thing? "
          "Reply with exactly one word: yes or no.";
      break;
  }
  return t;
}

void check_template(const PromptTemplate& t) {
  const std::set<std::string>& allowed = placeholders_for(t.stage);
  const std::string combined = t.system_text + "\n" + t.user_text;

  std::set<std::string> seen;
  std::size_t pos = 0;
  while ((pos = combined.find("{{", pos)) != std::string::npos) {
    const std::size_t end = combined.find("}}", pos + 2);
    if (end == std::string::npos) {
      throw TemplateError(std::string("unterminated placeholder in ") +
                          to_string(t.stage) + " template");
    }
    const std::string name = combined.substr(pos + 2, end - pos - 2);
    if (!allowed.count(name)) {
      throw TemplateError("unknown placeholder {{" + name + "}} in " +
                          to_string(t.stage) + " template");
    }
    seen.insert(name);
    pos = end + 2;
  }
  for (const std::string& required : allowed) {
    if (!seen.count(required)) {
      throw TemplateError("missing placeholder {{" + required + "}} in " +
                          to_string(t.stage) + " template");
    }
  }
}

std::string format_weight(double w) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", w);
  return buf;
}

std::string facts_block(const FactList& facts) {
  const bool any_weight =
      std::any_of(facts.facts.begin(), facts.facts.end(),
                  [](const AtomicFact& f) { return f.salience.has_value(); });
  std::string out;
  if (any_weight) {
    out +=
        "Each premise ends with its salience in [0,1]; give priority to "
        "high-salience premises.\n";
  }
  for (std::size_t i = 0; i < facts.facts.size(); ++i) {
    const AtomicFact& f = facts.facts[i];
    out += std::to_string(f.index) + ". " + f.text;
    if (f.salience) out += " [" + format_weight(*f.salience) + "]";
    if (i + 1 < facts.facts.size()) out += "\n";
  }
  return out;
}

std::string passages_block(const EvidenceContext& context) {
  std::string out;
  for (std::size_t i = 0; i < context.passages.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += context.passages[i];
  }
  return out;
}

std::string answer_constraint_for(TaskKind kind) {
  switch (kind) {
    case TaskKind::label3:
      return "The answer must be exactly one of: yes, no, maybe. ";
    case TaskKind::span:
      return "The answer must be the shortest exact span that answers the "
             "question. ";
  }
  return {};
}

std::string rationale_block_for(const Draft& draft) {
  if (draft.rationale.empty()) return {};
  return "Draft rationale: " + draft.rationale + "\n";
}

using Substitutions = std::vector<std::pair<std::string, std::string>>;

CompletionRequest render(const PromptTemplate& t, const Substitutions& subs) {
  std::string system_text = t.system_text;
  std::string user_text = t.user_text;
  for (const auto& [key, value] : subs) {
    system_text = replace_all(std::move(system_text), key, value);
    user_text = replace_all(std::move(user_text), key, value);
  }
  CompletionRequest request;
  request.system_text =
      "[stage:" + std::string(to_string(t.stage)) + "] " + system_text;
  request.user_text = std::move(user_text);
  request.max_output_tokens = default_max_output_tokens(t.stage);
  return request;
}

}  // namespace

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::decompose: return "decompose";
    case Stage::draft: return "draft";
    case Stage::score: return "score";
    case Stage::revise: return "revise";
    case Stage::judge: return "judge";
  }
  return "unknown";
}

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  for (Stage stage : kAllStages) {
    set.templates_.push_back(builtin_template(stage));
  }
  set.validate();
  return set;
}

TemplateSet TemplateSet::load_from_directory(const std::string& dir) {
  TemplateSet set;
  for (Stage stage : kAllStages) {
    const std::filesystem::path path =
        std::filesystem::path(dir) / (std::string(to_string(stage)) + ".txt");
    std::ifstream in(path);
    if (!in) {
      throw TemplateError("cannot open template file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string content = buffer.str();

    PromptTemplate t;
    t.stage = stage;
    bool separator_found = false;
    std::string user_part;
    std::string system_part;
    const auto lines = split_lines(content);
    for (const std::string_view line : lines) {
      if (!separator_found && trim(line) == "---") {
        separator_found = true;
        continue;
      }
      std::string& target = separator_found ? user_part : system_part;
      target.append(line);
      target.push_back('\n');
    }
    if (!separator_found) {
      throw TemplateError("template file " + path.string() +
                          " lacks the '---' system/user separator");
    }
    t.system_text = std::string(trim(system_part));
    t.user_text = std::string(trim(user_part));
    set.templates_.push_back(std::move(t));
  }
  set.validate();
  return set;
}

void TemplateSet::validate() const {
  for (const PromptTemplate& t : templates_) check_template(t);
}

const PromptTemplate& TemplateSet::get(Stage stage) const {
  for (const PromptTemplate& t : templates_) {
    if (t.stage == stage) return t;
  }
  throw TemplateError(std::string("no template loaded for stage ") +
                      to_string(stage));
}

CompletionRequest render_decompose(const TemplateSet& templates,
                                   const Question& question,
                                   const EvidenceContext& context,
                                   int max_facts, bool weighted) {
  if (context.empty()) {
    throw std::invalid_argument("decomposition requires at least one passage");
  }
  std::string weighted_instruction;
  if (weighted) {
    weighted_instruction =
        "\nAppend a salience weight in [0,1] to each line in square brackets, "
        "as in \"1. <fact> [0.8]\". Higher weight means the fact matters more "
        "for answering the question.";
  }
  return render(templates.get(Stage::decompose),
                {{"question", question.text},
                 {"passages", passages_block(context)},
                 {"max_facts", std::to_string(max_facts)},
                 {"weighted_instruction", weighted_instruction}});
}

CompletionRequest render_draft(const TemplateSet& templates,
                               const Question& question, const FactList& facts,
                               TaskKind kind) {
  return render(templates.get(Stage::draft),
                {{"question", question.text},
                 {"premises", facts_block(facts)},
                 {"answer_constraint", answer_constraint_for(kind)}});
}

CompletionRequest render_draft(const TemplateSet& templates,
                               const Question& question,
                               const EvidenceContext& context, TaskKind kind) {
  return render(templates.get(Stage::draft),
                {{"question", question.text},
                 {"premises", passages_block(context)},
                 {"answer_constraint", answer_constraint_for(kind)}});
}

namespace {

CompletionRequest render_score_impl(const TemplateSet& templates,
                                    const Question& question,
                                    std::string premises, const Draft& draft) {
  return render(templates.get(Stage::score),
                {{"question", question.text},
                 {"premises", std::move(premises)},
                 {"answer", draft.answer},
                 {"rationale_block", rationale_block_for(draft)}});
}

CompletionRequest render_revise_impl(const TemplateSet& templates,
                                     const Question& question,
                                     std::string premises, const Draft& draft,
                                     const SupportAssessment& support,
                                     TaskKind kind) {
  char score_buf[16];
  std::snprintf(score_buf, sizeof(score_buf), "%.2f", support.score);
  return render(templates.get(Stage::revise),
                {{"question", question.text},
                 {"premises", std::move(premises)},
                 {"answer", draft.answer},
                 {"rationale_block", rationale_block_for(draft)},
                 {"score", score_buf},
                 {"answer_constraint", answer_constraint_for(kind)}});
}

}  // namespace

CompletionRequest render_score(const TemplateSet& templates,
                               const Question& question, const FactList& facts,
                               const Draft& draft) {
  return render_score_impl(templates, question, facts_block(facts), draft);
}

CompletionRequest render_score(const TemplateSet& templates,
                               const Question& question,
                               const EvidenceContext& context,
                               const Draft& draft) {
  return render_score_impl(templates, question, passages_block(context), draft);
}

CompletionRequest render_revise(const TemplateSet& templates,
                                const Question& question,
                                const FactList& facts, const Draft& draft,
                                const SupportAssessment& support,
                                TaskKind kind) {
  return render_revise_impl(templates, question, facts_block(facts), draft,
                            support, kind);
}

CompletionRequest render_revise(const TemplateSet& templates,
                                const Question& question,
                                const EvidenceContext& context,
                                const Draft& draft,
                                const SupportAssessment& support,
                                TaskKind kind) {
  return render_revise_impl(templates, question, passages_block(context),
                            draft, support, kind);
}

CompletionRequest render_judge(const TemplateSet& templates,
                               std::string_view gold,
                               const std::vector<std::string>& alternatives,
                               std::string_view predicted) {
  std::string gold_display(gold);
  if (!alternatives.empty()) {
    gold_display += " (also acceptable: ";
    for (std::size_t i = 0; i < alternatives.size(); ++i) {
      if (i > 0) gold_display += "; ";
      gold_display += alternatives[i];
    }
    gold_display += ")";
  }
  return render(templates.get(Stage::judge),
                {{"gold", gold_display}, {"predicted", std::string(predicted)}});
}

ParseOutcome<FactList> parse_fact_list(const std::string& text, bool weighted,
                                       int max_facts) {
  ParseOutcome<FactList> out;
  std::vector<AtomicFact> staged;

  for (const std::string_view raw_line : split_lines(text)) {
    const std::string_view line = trim(raw_line);
    if (line.empty()) continue;

    // Leading marker: digits followed by '.' or ')'.
    std::size_t i = 0;
    while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
    if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')')) {
      out.warnings.push_back("skipped unnumbered line: " +
                             std::string(line.substr(0, 40)));
      continue;
    }
    std::string_view rest = trim(line.substr(i + 1));
    if (rest.empty()) {
      out.warnings.push_back("skipped empty fact line");
      continue;
    }

    AtomicFact fact;
    if (weighted) {
      bool salience_found = false;
      if (rest.back() == ']') {
        const std::size_t open = rest.rfind('[');
        if (open != std::string_view::npos) {
          const std::string_view inside =
              trim(rest.substr(open + 1, rest.size() - open - 2));
          std::size_t pos = 0;
          double weight = 0.0;
          if (scan_decimal(inside, pos, weight) && pos == inside.size()) {
            if (weight < 0.0 || weight > 1.0) {
              out.warnings.push_back("salience " + std::string(inside) +
                                     " clamped into [0,1]");
              weight = clamp01(weight);
            }
            fact.salience = weight;
            rest = trim(rest.substr(0, open));
            salience_found = true;
          }
        }
      }
      if (!salience_found) {
        out.warnings.push_back("missing salience on weighted fact line");
      }
    }
    if (rest.empty()) {
      out.warnings.push_back("skipped empty fact line");
      continue;
    }
    fact.text = std::string(rest);
    staged.push_back(std::move(fact));
  }

  if (staged.empty()) throw EmptyFactListError();

  if (max_facts > 0 && staged.size() > static_cast<std::size_t>(max_facts)) {
    out.warnings.push_back(
        "truncated " + std::to_string(staged.size() - max_facts) +
        " facts beyond max_facts=" + std::to_string(max_facts));
    staged.resize(static_cast<std::size_t>(max_facts));
  }
  for (std::size_t i = 0; i < staged.size(); ++i) {
    staged[i].index = static_cast<int>(i) + 1;
  }
  out.value.facts = std::move(staged);
  return out;
}

ParseOutcome<Draft> parse_draft(const std::string& text) {
  ParseOutcome<Draft> out;
  const std::string_view trimmed = trim(text);
  if (trimmed.empty()) throw EmptyDraftError();

  const auto lines = split_lines(text);
  std::size_t answer_line = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (starts_with_icase(trim(lines[i]), "ANSWER:")) {
      answer_line = i;
      break;
    }
  }

  if (answer_line == lines.size()) {
    out.value.answer = std::string(trimmed);
    out.warnings.push_back("missing ANSWER marker");
    return out;
  }

  std::string_view answer_rest = trim(lines[answer_line]);
  answer_rest = trim(answer_rest.substr(std::string_view("ANSWER:").size()));

  // The model sometimes runs both markers onto one line.
  std::string rationale;
  bool rationale_found = false;
  const std::size_t inline_rationale = find_last_icase(answer_rest, "RATIONALE:");
  if (inline_rationale != std::string_view::npos) {
    rationale = std::string(trim(answer_rest.substr(
        inline_rationale + std::string_view("RATIONALE:").size())));
    answer_rest = trim(answer_rest.substr(0, inline_rationale));
    rationale_found = true;
  }

  std::size_t scan = answer_line + 1;
  std::string answer(answer_rest);
  if (answer.empty()) {
    for (; scan < lines.size(); ++scan) {
      const std::string_view line = trim(lines[scan]);
      if (starts_with_icase(line, "RATIONALE:")) break;
      if (!line.empty()) {
        answer = std::string(line);
        out.warnings.push_back("answer text not on the ANSWER line");
        ++scan;
        break;
      }
    }
  }
  if (answer.empty()) throw EmptyDraftError();

  if (!rationale_found) {
    for (; scan < lines.size(); ++scan) {
      const std::string_view line = trim(lines[scan]);
      if (starts_with_icase(line, "RATIONALE:")) {
        rationale = std::string(
            trim(line.substr(std::string_view("RATIONALE:").size())));
        for (std::size_t j = scan + 1; j < lines.size(); ++j) {
          const std::string_view extra = trim(lines[j]);
          if (extra.empty()) continue;
          if (!rationale.empty()) rationale += "\n";
          rationale += std::string(extra);
        }
        rationale_found = true;
        break;
      }
    }
  }
  if (!rationale_found) out.warnings.push_back("missing RATIONALE marker");

  out.value.answer = std::move(answer);
  out.value.rationale = std::move(rationale);
  return out;
}

SupportAssessment parse_score(const std::string& text) {
  SupportAssessment assessment;
  assessment.raw_text = text;

  static constexpr std::string_view kMarker = "SUPPORT:";
  const std::size_t marker = find_last_icase(text, kMarker);
  double value = 0.0;
  bool parsed = false;
  if (marker != std::string::npos) {
    std::string_view after =
        std::string_view(text).substr(marker + kMarker.size());
    const std::size_t newline = after.find('\n');
    if (newline != std::string_view::npos) after = after.substr(0, newline);
    std::size_t pos = 0;
    parsed = scan_value(after, pos, value);
  } else {
    const std::string_view whole = trim(text);
    std::size_t pos = 0;
    if (scan_value(whole, pos, value)) {
      skip_spaces(whole, pos);
      parsed = pos == whole.size();  // bare value must be the entire output
    }
  }

  if (parsed) {
    assessment.score = clamp01(value);
    assessment.parse_ok = true;
  } else {
    assessment.score = 0.0;
    assessment.parse_ok = false;
  }
  return assessment;
}

std::string prompt_fingerprint(const CompletionRequest& request) {
  return content_fingerprint(request.system_text, request.user_text);
}

}  // namespace pave
