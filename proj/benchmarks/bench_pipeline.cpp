#include <benchmark/benchmark.h>

#include <string>

#include "pave/backend.hpp"
#include "pave/pipeline.hpp"
#include "pave/prompting.hpp"

namespace {

const pave::Question kQuestion{"bench", "Does the treatment reduce risk?"};

pave::EvidenceContext evidence() {
  pave::EvidenceContext context;
  context.passages = {
      "A randomized trial of 2,400 adults found a 12% relative risk "
      "reduction over five years of follow-up.",
      "A smaller observational study reported no significant difference "
      "after adjustment for baseline severity."};
  return context;
}

void enqueue_keep_path(pave::ScriptedBackend& backend) {
  backend.enqueue("decompose",
                  "1. A randomized trial found a 12% relative risk "
                  "reduction.\n2. An observational study reported no "
                  "significant difference.");
  backend.enqueue("draft",
                  "ANSWER: maybe\nRATIONALE: The trial supports a reduction "
                  "but the observational study does not.");
  backend.enqueue("score", "SUPPORT: 0.85");
}

void BM_FullPipelineScripted(benchmark::State& state) {
  pave::ScriptedBackend backend;
  const pave::TemplateSet templates = pave::TemplateSet::builtin();
  pave::PipelineContext ctx{backend, templates, pave::RetryPolicy{}, [](int) {}};
  pave::PipelineConfig config;
  config.variant = pave::Variant::pave;

  for (auto _ : state) {
    enqueue_keep_path(backend);
    benchmark::DoNotOptimize(pave::run_pave(
        kQuestion, evidence(), pave::TaskKind::label3, config, ctx));
  }
}
BENCHMARK(BM_FullPipelineScripted);

void BM_RenderDecompose(benchmark::State& state) {
  const pave::TemplateSet templates = pave::TemplateSet::builtin();
  const pave::EvidenceContext context = evidence();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        pave::render_decompose(templates, kQuestion, context, 16, false));
  }
}
BENCHMARK(BM_RenderDecompose);

void BM_TraceSerialization(benchmark::State& state) {
  pave::ScriptedBackend backend;
  const pave::TemplateSet templates = pave::TemplateSet::builtin();
  pave::PipelineContext ctx{backend, templates, pave::RetryPolicy{}, [](int) {}};
  pave::PipelineConfig config;
  config.variant = pave::Variant::pave;
  enqueue_keep_path(backend);
  const pave::RunOutcome out = pave::run_pave(
      kQuestion, evidence(), pave::TaskKind::label3, config, ctx);

  for (auto _ : state) {
    benchmark::DoNotOptimize(pave::trace_to_jsonl(out.trace));
  }
}
BENCHMARK(BM_TraceSerialization);

}  // namespace

BENCHMARK_MAIN();
