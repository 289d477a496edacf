#include <benchmark/benchmark.h>

#include <string>

#include "pave/dataset.hpp"
#include "pave/evaluation.hpp"
#include "pave/prompting.hpp"

namespace {

void BM_ParseScore(benchmark::State& state) {
  const std::string text =
      "The premises cover the core claim but not the dosage.\n"
      "SUPPORT: 0.85 (fairly confident)";
  for (auto _ : state) {
    benchmark::DoNotOptimize(pave::parse_score(text));
  }
}
BENCHMARK(BM_ParseScore);

void BM_ParseScoreFraction(benchmark::State& state) {
  const std::string text = "SUPPORT: 7/10";
  for (auto _ : state) {
    benchmark::DoNotOptimize(pave::parse_score(text));
  }
}
BENCHMARK(BM_ParseScoreFraction);

void BM_ParseFactList(benchmark::State& state) {
  std::string text;
  for (int i = 1; i <= static_cast<int>(state.range(0)); ++i) {
    text += std::to_string(i) +
            ". Trial participants in group " + std::to_string(i) +
            " showed reduced systolic pressure after eight weeks.\n";
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(pave::parse_fact_list(text, 16, false));
  }
}
BENCHMARK(BM_ParseFactList)->Arg(4)->Arg(16);

void BM_WhitespaceTokenCount(benchmark::State& state) {
  std::string text;
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
    text += "word" + std::to_string(i);
    text += (i % 5 == 0) ? "\xc2\xa0" : " ";
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(pave::whitespace_token_count(text));
  }
}
BENCHMARK(BM_WhitespaceTokenCount)->Arg(16)->Arg(256);

void BM_NormalizeSpan(benchmark::State& state) {
  const std::string text = "  The U.S.  National  Aeronautics Administration ";
  for (auto _ : state) {
    benchmark::DoNotOptimize(pave::normalize_span(text));
  }
}
BENCHMARK(BM_NormalizeSpan);

}  // namespace

BENCHMARK_MAIN();
