#pragma once

#include <span>
#include <string_view>

#include "inflect/corpus.hpp"

namespace inflect {

// Unit-cost edit distance over scalar values.
int levenshtein(std::u32string_view a, std::u32string_view b);

// Fraction of positions whose strings are identical. UsageError on empty or
// mismatched lists.
double exact_match_accuracy(std::span<const Chars> predicted, std::span<const Chars> gold);

// Mean edit distance. UsageError on empty or mismatched lists.
double mean_levenshtein(std::span<const Chars> predicted, std::span<const Chars> gold);

}  // namespace inflect
