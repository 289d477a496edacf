#include "pave/model.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>

namespace pave {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::importance_weighting: return "importance_weighting";
    case Variant::support_scoring: return "support_scoring";
    case Variant::pave: return "pave";
  }
  return "unknown";
}

const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::label3: return "label3";
    case TaskKind::span: return "span";
  }
  return "unknown";
}

std::optional<Variant> variant_from_string(std::string_view name) {
  if (name == "baseline") return Variant::baseline;
  if (name == "importance_weighting") return Variant::importance_weighting;
  if (name == "support_scoring") return Variant::support_scoring;
  if (name == "pave") return Variant::pave;
  return std::nullopt;
}

std::optional<TaskKind> task_kind_from_string(std::string_view name) {
  if (name == "label3") return TaskKind::label3;
  if (name == "span") return TaskKind::span;
  return std::nullopt;
}

std::vector<std::string> PipelineConfig::validate() const {
  std::vector<std::string> problems;
  if (!(tau >= 0.0 && tau <= 1.0)) {
    problems.push_back("tau must lie in [0,1]");
  }
  if (max_facts < 1) {
    problems.push_back("max_facts must be at least 1");
  }
  if (max_revisions < 1) {
    problems.push_back("max_revisions must be at least 1");
  }
  if (!(temperature >= 0.0)) {
    problems.push_back("temperature must be nonnegative");
  }
  return problems;
}

FinalizationDecision gate(const SupportAssessment& support, double tau) {
  return support.score >= tau ? FinalizationDecision::Keep
                              : FinalizationDecision::Revise;
}

double clamp01(double value) {
  if (std::isnan(value)) return 0.0;
  if (value < 0.0) return 0.0;
  if (value > 1.0) return 1.0;
  return value;
}

namespace {

void check_fact_list(const FactList& facts, std::vector<std::string>& out) {
  for (std::size_t i = 0; i < facts.facts.size(); ++i) {
    const AtomicFact& f = facts.facts[i];
    if (f.index != static_cast<int>(i) + 1) {
      out.push_back("fact indices not contiguous from 1");
      break;
    }
  }
  for (const AtomicFact& f : facts.facts) {
    if (f.text.empty()) {
      out.push_back("fact text empty at index " + std::to_string(f.index));
    }
    if (f.salience && !(*f.salience >= 0.0 && *f.salience <= 1.0)) {
      out.push_back("fact salience outside [0,1] at index " +
                    std::to_string(f.index));
    }
  }
}

int min_calls_for(Variant v) {
  switch (v) {
    case Variant::baseline: return 1;
    case Variant::importance_weighting: return 2;
    case Variant::support_scoring: return 2;
    case Variant::pave: return 3;
  }
  return 1;
}

}  // namespace

std::vector<std::string> validate_trace(const AuditTrace& trace,
                                        const PipelineConfig& config) {
  std::vector<std::string> v;
  const Variant variant = trace.variant;

  if (trace.question_id.empty()) v.push_back("question_id empty");
  if (trace.variant != config.variant) {
    v.push_back("trace variant does not match config variant");
  }
  if (trace.schema_version != 1) v.push_back("unexpected schema_version");
  if (!(trace.tau_used >= 0.0 && trace.tau_used <= 1.0)) {
    v.push_back("tau_used outside [0,1]");
  }

  check_fact_list(trace.facts, v);
  if (trace.draft.answer.empty()) v.push_back("draft answer empty");
  if (trace.final.text.empty()) v.push_back("final answer empty");

  const bool wants_facts = variant == Variant::pave ||
                           variant == Variant::importance_weighting;
  const bool wants_support =
      variant == Variant::pave || variant == Variant::support_scoring;

  if (wants_facts && trace.facts.empty()) {
    v.push_back(std::string("facts missing for variant ") + to_string(variant));
  }
  if (!wants_facts && !trace.facts.empty()) {
    v.push_back(std::string("facts present for variant ") + to_string(variant));
  }
  if (wants_support && !trace.support) {
    v.push_back(std::string("support missing for variant ") +
                to_string(variant));
  }
  if (!wants_support && trace.support) {
    v.push_back(std::string("support present for variant ") +
                to_string(variant));
  }

  if (trace.support) {
    if (!(trace.support->score >= 0.0 && trace.support->score <= 1.0)) {
      v.push_back("support score outside [0,1]");
    }
    if (!trace.support->parse_ok && trace.support->score != 0.0) {
      v.push_back("support score nonzero despite parse failure");
    }
  }

  // was_revised = true iff support present and support.score < tau_used
  const bool should_revise =
      trace.support && trace.support->score < trace.tau_used;
  if (trace.final.was_revised != should_revise) {
    v.push_back("revision flag inconsistent with gate");
  }

  const int min_calls = min_calls_for(variant);
  const int exact_calls = min_calls + (trace.final.was_revised ? 1 : 0);
  if (config.max_revisions == 1) {
    if (trace.final.backend_calls != exact_calls) {
      v.push_back("backend_calls inconsistent with variant");
    }
  } else if (trace.final.backend_calls < exact_calls) {
    v.push_back("backend_calls below variant minimum");
  }

  return v;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string content_fingerprint(std::string_view system_text,
                                std::string_view user_text) {
  std::string joined;
  joined.reserve(system_text.size() + user_text.size() + 1);
  joined.append(system_text);
  joined.push_back('\x1f');
  joined.append(user_text);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(joined)));
  return std::string(buf);
}

std::string format_timestamp_utc(std::chrono::system_clock::time_point tp) {
  using namespace std::chrono;
  const std::time_t t = system_clock::to_time_t(tp);
  std::tm g{};
  gmtime_r(&t, &g);
  const auto ms =
      duration_cast<milliseconds>(tp.time_since_epoch()).count() % 1000;
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                g.tm_year + 1900, g.tm_mon + 1, g.tm_mday, g.tm_hour, g.tm_min,
                g.tm_sec, static_cast<int>(ms < 0 ? ms + 1000 : ms));
  return std::string(buf);
}

std::string now_timestamp_utc() {
  return format_timestamp_utc(std::chrono::system_clock::now());
}

nlohmann::json trace_to_json(const AuditTrace& trace) {
  nlohmann::json facts = nlohmann::json::array();
  for (const AtomicFact& f : trace.facts.facts) {
    nlohmann::json jf = {{"index", f.index}, {"text", f.text}};
    if (f.salience) jf["salience"] = *f.salience;
    facts.push_back(std::move(jf));
  }

  nlohmann::json j = {
      {"question_id", trace.question_id},
      {"variant", to_string(trace.variant)},
      {"facts", std::move(facts)},
      {"draft",
       {{"answer", trace.draft.answer}, {"rationale", trace.draft.rationale}}},
      {"final",
       {{"text", trace.final.text},
        {"was_revised", trace.final.was_revised},
        {"backend_calls", trace.final.backend_calls}}},
      {"tau_used", trace.tau_used},
      {"started_at", trace.started_at},
      {"ended_at", trace.ended_at},
      {"prompt_fingerprints", trace.prompt_fingerprints},
      {"schema_version", trace.schema_version},
  };
  if (trace.support) {
    j["support"] = {{"score", trace.support->score},
                    {"parse_ok", trace.support->parse_ok},
                    {"raw_text", trace.support->raw_text}};
  }
  if (!trace.prompts.empty()) j["prompts"] = trace.prompts;
  return j;
}

AuditTrace trace_from_json(const nlohmann::json& j) {
  AuditTrace t;
  t.question_id = j.at("question_id").get<std::string>();
  const auto variant = variant_from_string(j.at("variant").get<std::string>());
  if (!variant) {
    throw nlohmann::json::other_error::create(
        501, "unknown variant in trace: " + j.at("variant").dump(), &j);
  }
  t.variant = *variant;
  for (const auto& jf : j.at("facts")) {
    AtomicFact f;
    f.index = jf.at("index").get<int>();
    f.text = jf.at("text").get<std::string>();
    if (jf.contains("salience")) f.salience = jf.at("salience").get<double>();
    t.facts.facts.push_back(std::move(f));
  }
  t.draft.answer = j.at("draft").at("answer").get<std::string>();
  t.draft.rationale = j.at("draft").at("rationale").get<std::string>();
  if (j.contains("support")) {
    SupportAssessment s;
    s.score = j.at("support").at("score").get<double>();
    s.parse_ok = j.at("support").at("parse_ok").get<bool>();
    s.raw_text = j.at("support").at("raw_text").get<std::string>();
    t.support = std::move(s);
  }
  t.final.text = j.at("final").at("text").get<std::string>();
  t.final.was_revised = j.at("final").at("was_revised").get<bool>();
  t.final.backend_calls = j.at("final").at("backend_calls").get<int>();
  t.tau_used = j.at("tau_used").get<double>();
  t.started_at = j.at("started_at").get<std::string>();
  t.ended_at = j.at("ended_at").get<std::string>();
  t.prompt_fingerprints =
      j.at("prompt_fingerprints").get<std::vector<std::string>>();
  if (j.contains("prompts")) {
    t.prompts = j.at("prompts").get<std::vector<std::string>>();
  }
  t.schema_version = j.at("schema_version").get<int>();
  return t;
}

std::string trace_to_jsonl(const AuditTrace& trace) {
  return trace_to_json(trace).dump();
}

}  // namespace pave
