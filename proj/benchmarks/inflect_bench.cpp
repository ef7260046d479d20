#include <benchmark/benchmark.h>

#include "inflect/align.hpp"
#include "inflect/hallucinate.hpp"
#include "inflect/model.hpp"
#include "inflect/train.hpp"

namespace inflect {
namespace {

Example sample_example() {
  Example e;
  e.lemma = U"παρακάμπτω";
  e.form = U"παρέκαμπτες";
  e.tags = {"V", "2", "SG", "IPFV", "PST"};
  e.language = "ell";
  return e;
}

struct Fixture {
  Vocabulary vocab;
  ModelParams params;
  EncodedExample encoded;

  Fixture() {
    const std::vector<Example> data = {sample_example()};
    const std::vector<Example> sets[] = {data};
    vocab = Vocabulary::build(sets);
    params = ModelParams(ModelConfig{}, vocab.char_count(), vocab.tag_count(), vocab.language_count());
    Rng rng(1);
    params.initialize(rng);
    encoded = vocab.encode(data[0]);
  }
};

void BM_Align(benchmark::State& state) {
  const Example e = sample_example();
  for (auto _ : state) benchmark::DoNotOptimize(align_chars(e.lemma, *e.form));
}
BENCHMARK(BM_Align);

void BM_Hallucinate(benchmark::State& state) {
  const std::vector<Example> data = {sample_example()};
  const Chars alphabet = U"αβγδεζηθικλμνξοπρστυφχψω";
  HallucinationOptions opt;
  opt.count = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(hallucinate_dataset(data, alphabet, 1, opt));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Hallucinate)->Arg(1000);

void BM_DecoderStep(benchmark::State& state) {
  Fixture f;
  ad::Tape tape;
  const BoundModel m = bind(tape, static_cast<const ModelParams&>(f.params));
  const LemmaEncoding lemma = encode_lemma(m, f.encoded.lemma);
  const TagEncoding tags = encode_tags(m, f.encoded.tags);
  const AttentionMemory tm = make_memory(m.tag_attn, tags.states);
  const AttentionMemory cm = make_memory(m.char_attn, lemma.states);
  const DecoderState st = initial_state(m);
  for (auto _ : state) benchmark::DoNotOptimize(decoder_step(m, st, tm, cm).probs.value().data());
}
BENCHMARK(BM_DecoderStep);

void BM_ForwardBackward(benchmark::State& state) {
  Fixture f;
  f.params.set_requires_grad(true);
  for (auto _ : state) {
    ad::Tape tape;
    const LossResult r = forward_loss(bind(tape, f.params), f.encoded, LossWeights{});
    tape.backward(r.loss);
    benchmark::DoNotOptimize(r.loss.scalar());
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_GreedyDecode(benchmark::State& state) {
  Fixture f;
  for (auto _ : state)
    benchmark::DoNotOptimize(decode(f.params, f.encoded, default_max_length(f.encoded.lemma.size())).ids.size());
}
BENCHMARK(BM_GreedyDecode);

}  // namespace
}  // namespace inflect
BENCHMARK_MAIN();
