#include <benchmark/benchmark.h>

#include "diflow/corpus.hpp"
#include "diflow/evaluation.hpp"
#include "diflow/model.hpp"
#include "diflow/oracle.hpp"
#include "diflow/sampler.hpp"
#include "diflow/training.hpp"

namespace nn = diflow::nn;
using diflow::RngStream;

namespace {

nn::Tensor random_tensor(nn::Shape shape, RngStream& rng) {
  nn::Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.normal();
  return t;
}

const diflow::Corpus& small_corpus() {
  static const diflow::Corpus corpus = [] {
    diflow::CorpusConfig c;
    c.train_utterances = 64;
    c.heldout_utterances = 16;
    return diflow::generate_corpus(c);
  }();
  return corpus;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RngStream rng(1);
  const nn::Var a = nn::Var::constant(random_tensor({n, n}, rng));
  const nn::Var b = nn::Var::constant(random_tensor({n, n}, rng));
  nn::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(nn::matmul(a, b).value().data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

// One posterior evaluation of the default-sized denoiser.
static void BM_Denoise(benchmark::State& state) {
  const diflow::DiFlowModel model(diflow::ModelConfig{});
  const auto& u = small_corpus().heldout.front();
  const auto split = diflow::split_prompt(u, 0.3, 64);
  nn::NoGradGuard no_grad;
  const auto content = model.pcm().forward(split->phonemes, split->durations);
  const auto ctx = diflow::make_context(*split, content);
  const auto xt = diflow::MaskedSequence::all_masked(4, split->length(), 64);
  for (auto _ : state) benchmark::DoNotOptimize(model.fdfd().denoise(xt, ctx).data().data());
  state.counters["frames"] = static_cast<double>(split->length() + split->prompt_length);
}
BENCHMARK(BM_Denoise)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  diflow::DiFlowModel model(diflow::ModelConfig{});
  diflow::TrainConfig tc;
  tc.steps = 1 << 30;
  diflow::Trainer trainer(model, tc, small_corpus().train);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step().total);
  state.SetItemsProcessed(state.iterations() * tc.batch_size);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

// Full synthesis of one utterance; time grows linearly with NFE.
static void BM_Synthesize(benchmark::State& state) {
  const diflow::DiFlowModel model(diflow::ModelConfig{});
  const auto& u = small_corpus().heldout.front();
  const auto split = diflow::split_prompt(u, 0.3, 64);
  diflow::SamplerConfig cfg;
  cfg.nfe = static_cast<int>(state.range(0));
  RngStream rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(diflow::synthesize(model, *split, cfg, false, rng).durations.data());
  }
}
BENCHMARK(BM_Synthesize)->Arg(1)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_GenerateOracle(benchmark::State& state) {
  const auto q = diflow::ExplicitTarget::uniform(3, 4);
  const auto den = diflow::make_oracle_denoiser(q, 3, 1);
  diflow::SamplerConfig cfg;
  cfg.nfe = static_cast<int>(state.range(0));
  RngStream rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(diflow::generate(den, 3, 1, 4, cfg, rng).data.data());
}
BENCHMARK(BM_GenerateOracle)->Arg(32)->Arg(256);

static void BM_GenerateCorpus(benchmark::State& state) {
  diflow::CorpusConfig c;
  c.train_utterances = static_cast<int>(state.range(0));
  c.heldout_utterances = 10;
  for (auto _ : state) benchmark::DoNotOptimize(diflow::generate_corpus(c).train.size());
}
BENCHMARK(BM_GenerateCorpus)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
