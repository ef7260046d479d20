#include "inflect/hallucinate.hpp"

#include <algorithm>
#include <thread>

#include "inflect/error.hpp"

namespace inflect {

Example hallucinate_example(const Example& e, std::span<const StemRegion> regions, std::span<const char32_t> alphabet,
                            Rng& rng) {
  if (!e.form) throw UsageError("hallucinate_example: example has no form");
  if (alphabet.empty()) throw UsageError("hallucinate_example: empty alphabet");
  Example out = e;
  out.is_hallucinated = true;
  Chars& form = *out.form;
  for (const StemRegion& r : regions) {
    // Endpoints stay; interior positions get one shared draw each.
    for (int offset = 1; offset + 1 < r.length(); ++offset) {
      const char32_t c = alphabet[uniform_index(rng, alphabet.size())];
      out.lemma[static_cast<std::size_t>(r.lemma_start + offset)] = c;
      form[static_cast<std::size_t>(r.form_start + offset)] = c;
    }
  }
  return out;
}

namespace {

Example hallucinate_one(std::span<const Example> data, std::span<const char32_t> alphabet, std::uint64_t seed,
                        std::size_t index, int min_stem) {
  Rng rng = make_stream(seed, "hallucinate", index);
  const Example& base = data[uniform_index(rng, data.size())];
  if (!base.form) throw UsageError("hallucinate_dataset: example without a form");
  const Alignment a = align_chars(base.lemma, *base.form);
  const std::vector<StemRegion> regions = find_stem_regions(base.lemma, *base.form, a, min_stem);
  return hallucinate_example(base, regions, alphabet, rng);
}

}  // namespace

std::vector<Example> hallucinate_dataset(std::span<const Example> data, std::span<const char32_t> alphabet,
                                         std::uint64_t seed, const HallucinationOptions& options) {
  if (data.empty()) throw UsageError("hallucinate_dataset: empty data");
  if (alphabet.empty()) throw UsageError("hallucinate_dataset: empty alphabet");
  std::vector<Example> out(options.count);
  const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(options.count)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < options.count; ++i) out[i] = hallucinate_one(data, alphabet, seed, i, options.min_stem);
    return out;
  }

  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < options.count; i += workers)
          out[i] = hallucinate_one(data, alphabet, seed, i, options.min_stem);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace inflect
