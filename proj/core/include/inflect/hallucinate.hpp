#pragma once

// Synthetic training triples: the interior characters of every stem region
// are replaced by characters drawn uniformly from the language's alphabet,
// with the same replacement written into lemma and form.

#include <cstdint>
#include <span>
#include <vector>

#include "inflect/align.hpp"
#include "inflect/corpus.hpp"
#include "inflect/random.hpp"

namespace inflect {

// Regions must come from align_chars/find_stem_regions on `e`. Examples with
// no region are returned unchanged apart from the hallucination flag.
// UsageError when `e` has no form or the alphabet is empty.
Example hallucinate_example(const Example& e, std::span<const StemRegion> regions, std::span<const char32_t> alphabet,
                            Rng& rng);

struct HallucinationOptions {
  std::size_t count = 10000;
  int min_stem = 3;
  // Worker threads. Output does not depend on this value: item i always uses
  // the sub-stream derived from (seed, i).
  unsigned workers = 1;
};

// Draws `count` base examples uniformly with replacement and hallucinates
// each one. UsageError on empty data or alphabet.
std::vector<Example> hallucinate_dataset(std::span<const Example> data, std::span<const char32_t> alphabet,
                                         std::uint64_t seed, const HallucinationOptions& options = {});

}  // namespace inflect
