#pragma once

// Character alignment between a lemma and its inflected form, and the stem
// regions (runs of identical aligned characters) used for hallucination.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace inflect {

inline constexpr int kGap = -1;

struct AlignedPair {
  int lemma = kGap;  // index into the lemma, or kGap for an insertion
  int form = kGap;   // index into the form, or kGap for a deletion

  bool operator==(const AlignedPair&) const = default;
};

struct Alignment {
  std::vector<AlignedPair> pairs;
  int cost = 0;
};

// Half-open spans over lemma and form indices of equal length.
struct StemRegion {
  int lemma_start = 0;
  int lemma_end = 0;
  int form_start = 0;
  int form_end = 0;

  int length() const { return lemma_end - lemma_start; }
  bool operator==(const StemRegion&) const = default;
};

// Minimum unit-cost edit alignment. Ties in the traceback (run from the end
// of both strings) prefer match, then substitution, then deletion of a lemma
// character, then insertion of a form character. UsageError on empty input.
Alignment align_chars(std::u32string_view lemma, std::u32string_view form);

// Maximal runs of at least `min_len` consecutive aligned pairs whose
// characters are identical, left to right.
std::vector<StemRegion> find_stem_regions(std::u32string_view lemma, std::u32string_view form, const Alignment& a,
                                          int min_len = 3);

// One inspection line: `lemma<TAB>form<TAB>[ls,le)=[fs,fe):text ...`.
std::string format_stem_line(std::u32string_view lemma, std::u32string_view form,
                             std::span<const StemRegion> regions);

}  // namespace inflect
