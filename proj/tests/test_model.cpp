#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "pave/model.hpp"

using namespace pave;

namespace {

AuditTrace make_pave_trace() {
  AuditTrace t;
  t.question_id = "q1";
  t.variant = Variant::pave;
  t.facts.facts = {{1, "Rule X applies.", std::nullopt},
                   {2, "Exception: case Y.", std::nullopt}};
  t.draft = {"yes", "Rule X covers it."};
  t.support = SupportAssessment{0.9, true, "SUPPORT: 0.9"};
  t.final = {"yes", false, 3};
  t.tau_used = 0.7;
  t.started_at = "2026-01-02T03:04:05.000Z";
  t.ended_at = "2026-01-02T03:04:06.000Z";
  t.prompt_fingerprints = {"aaaaaaaaaaaaaaaa", "bbbbbbbbbbbbbbbb",
                           "cccccccccccccccc"};
  return t;
}

PipelineConfig pave_config() {
  PipelineConfig c;
  c.variant = Variant::pave;
  c.tau = 0.7;
  return c;
}

}  // namespace

TEST_CASE("variant and task kind names round trip") {
  for (Variant v : {Variant::baseline, Variant::importance_weighting,
                    Variant::support_scoring, Variant::pave}) {
    CHECK(variant_from_string(to_string(v)) == v);
  }
  for (TaskKind k : {TaskKind::label3, TaskKind::span}) {
    CHECK(task_kind_from_string(to_string(k)) == k);
  }
  CHECK(!variant_from_string("PAVE"));
  CHECK(!task_kind_from_string("span3"));
}

TEST_CASE("gate keeps exactly when score reaches tau") {
  CHECK(gate({0.70, true, ""}, 0.7) == FinalizationDecision::Keep);
  CHECK(gate({0.69, true, ""}, 0.7) == FinalizationDecision::Revise);
  CHECK(gate({0.0, false, ""}, 0.0) == FinalizationDecision::Keep);
  CHECK(gate({1.0, true, ""}, 1.0) == FinalizationDecision::Keep);
  CHECK(gate({0.999, true, ""}, 1.0) == FinalizationDecision::Revise);
  // total even for out-of-range tau
  CHECK(gate({1.0, true, ""}, 1.5) == FinalizationDecision::Revise);
}

TEST_CASE("clamp01 saturates and absorbs NaN") {
  CHECK(clamp01(0.5) == 0.5);
  CHECK(clamp01(-3.0) == 0.0);
  CHECK(clamp01(1.0001) == 1.0);
  CHECK(clamp01(std::nan("")) == 0.0);
}

TEST_CASE("fnv1a64 matches the reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("content fingerprint separates system and user text") {
  const std::string fp = content_fingerprint("sys", "user");
  CHECK(fp.size() == 16);
  CHECK(fp.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(fp == content_fingerprint("sys", "user"));
  CHECK(fp != content_fingerprint("sysu", "ser"));
  CHECK(content_fingerprint("ab", "") != content_fingerprint("a", "b"));
}

TEST_CASE("timestamps format as UTC ISO 8601 with milliseconds") {
  using namespace std::chrono;
  CHECK(format_timestamp_utc(system_clock::from_time_t(0)) ==
        "1970-01-01T00:00:00.000Z");
  CHECK(format_timestamp_utc(system_clock::from_time_t(1234567890) +
                             milliseconds(123)) ==
        "2009-02-13T23:31:30.123Z");
}

TEST_CASE("pipeline config validation flags each bad field") {
  CHECK(PipelineConfig{}.validate().empty());

  PipelineConfig c;
  c.tau = 1.5;
  c.max_facts = 0;
  c.max_revisions = 0;
  c.temperature = -0.1;
  const auto problems = c.validate();
  CHECK(problems.size() == 4);
}

TEST_CASE("validate_trace accepts a well formed pave trace") {
  CHECK(validate_trace(make_pave_trace(), pave_config()).empty());
}

TEST_CASE("validate_trace flags gate inconsistencies") {
  AuditTrace t = make_pave_trace();
  t.final.was_revised = true;  // score 0.9 >= tau 0.7 says keep
  const auto v = validate_trace(t, pave_config());
  REQUIRE(!v.empty());
  bool found = false;
  for (const auto& msg : v) {
    if (msg.find("revision flag") != std::string::npos) found = true;
  }
  CHECK(found);
}

TEST_CASE("validate_trace flags missing support for pave") {
  AuditTrace t = make_pave_trace();
  t.support.reset();
  const auto v = validate_trace(t, pave_config());
  bool found = false;
  for (const auto& msg : v) {
    if (msg.find("support missing") != std::string::npos) found = true;
  }
  CHECK(found);
}

TEST_CASE("validate_trace enforces variant purity") {
  AuditTrace t = make_pave_trace();
  t.variant = Variant::baseline;
  t.final.backend_calls = 1;
  PipelineConfig c;
  c.variant = Variant::baseline;
  c.tau = 0.7;
  auto v = validate_trace(t, c);
  // baseline must not carry facts or support
  CHECK(v.size() >= 2);

  t.facts.facts.clear();
  t.support.reset();
  t.tau_used = 0.7;
  CHECK(validate_trace(t, c).empty());
}

TEST_CASE("validate_trace checks the per variant call count") {
  AuditTrace t = make_pave_trace();
  t.final.backend_calls = 4;  // keep path must cost exactly 3
  const auto v = validate_trace(t, pave_config());
  bool found = false;
  for (const auto& msg : v) {
    if (msg.find("backend_calls") != std::string::npos) found = true;
  }
  CHECK(found);
}

TEST_CASE("validate_trace checks fact index contiguity") {
  AuditTrace t = make_pave_trace();
  t.facts.facts[1].index = 7;
  CHECK(!validate_trace(t, pave_config()).empty());
}

TEST_CASE("trace json round trips every field") {
  const AuditTrace t = make_pave_trace();
  const AuditTrace back = trace_from_json(trace_to_json(t));
  CHECK(back.question_id == t.question_id);
  CHECK(back.variant == t.variant);
  REQUIRE(back.facts.size() == 2);
  CHECK(back.facts.facts[1].text == "Exception: case Y.");
  CHECK(back.draft.answer == t.draft.answer);
  CHECK(back.draft.rationale == t.draft.rationale);
  REQUIRE(back.support.has_value());
  CHECK(back.support->score == doctest::Approx(0.9));
  CHECK(back.support->parse_ok);
  CHECK(back.support->raw_text == "SUPPORT: 0.9");
  CHECK(back.final.text == t.final.text);
  CHECK(back.final.was_revised == t.final.was_revised);
  CHECK(back.final.backend_calls == 3);
  CHECK(back.tau_used == doctest::Approx(0.7));
  CHECK(back.started_at == t.started_at);
  CHECK(back.ended_at == t.ended_at);
  CHECK(back.prompt_fingerprints == t.prompt_fingerprints);
  CHECK(back.schema_version == 1);
}

TEST_CASE("trace json omits support when absent and prompts when empty") {
  AuditTrace t = make_pave_trace();
  t.variant = Variant::baseline;
  t.facts.facts.clear();
  t.support.reset();
  const nlohmann::json j = trace_to_json(t);
  CHECK(!j.contains("support"));
  CHECK(!j.contains("prompts"));
  CHECK(j.at("schema_version") == 1);

  AuditTrace with_prompts = make_pave_trace();
  with_prompts.prompts = {"sys\n---\nuser"};
  const nlohmann::json j2 = trace_to_json(with_prompts);
  REQUIRE(j2.contains("prompts"));
  CHECK(j2.at("prompts").size() == 1);
  const AuditTrace back = trace_from_json(j2);
  CHECK(back.prompts == with_prompts.prompts);
}

TEST_CASE("trace jsonl is a single line") {
  const std::string line = trace_to_jsonl(make_pave_trace());
  CHECK(line.find('\n') == std::string::npos);
  CHECK(trace_from_json(nlohmann::json::parse(line)).question_id == "q1");
}

TEST_CASE("salience survives the json round trip") {
  AuditTrace t = make_pave_trace();
  t.variant = Variant::importance_weighting;
  t.support.reset();
  t.final.backend_calls = 2;
  t.facts.facts[0].salience = 0.8;
  t.facts.facts[1].salience = 0.3;
  const AuditTrace back = trace_from_json(trace_to_json(t));
  REQUIRE(back.facts.facts[0].salience.has_value());
  CHECK(*back.facts.facts[0].salience == doctest::Approx(0.8));
  REQUIRE(back.facts.facts[1].salience.has_value());

  PipelineConfig c;
  c.variant = Variant::importance_weighting;
  c.tau = 0.7;
  CHECK(validate_trace(back, c).empty());
}
