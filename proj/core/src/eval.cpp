#include "inflect/eval.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "inflect/error.hpp"

namespace inflect {

namespace {

void check_lists(std::span<const Chars> predicted, std::span<const Chars> gold, const char* what) {
  if (predicted.size() != gold.size())
    throw UsageError(std::string(what) + ": " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(gold.size()) + " gold forms");
  if (gold.empty()) throw UsageError(std::string(what) + ": empty input");
}

}  // namespace

int levenshtein(std::u32string_view a, std::u32string_view b) {
  std::vector<int> prev(b.size() + 1);
  std::vector<int> cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double exact_match_accuracy(std::span<const Chars> predicted, std::span<const Chars> gold) {
  check_lists(predicted, gold, "exact_match_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double mean_levenshtein(std::span<const Chars> predicted, std::span<const Chars> gold) {
  check_lists(predicted, gold, "mean_levenshtein");
  long total = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) total += levenshtein(predicted[i], gold[i]);
  return static_cast<double>(total) / static_cast<double>(gold.size());
}

}  // namespace inflect
