#include "inflect/align.hpp"

#include <algorithm>

#include "inflect/corpus.hpp"
#include "inflect/error.hpp"

namespace inflect {

Alignment align_chars(std::u32string_view lemma, std::u32string_view form) {
  if (lemma.empty() || form.empty()) throw UsageError("align_chars: empty input");
  const std::size_t n = lemma.size();
  const std::size_t k = form.size();
  const std::size_t width = k + 1;
  std::vector<int> dist((n + 1) * width);
  auto at = [&](std::size_t i, std::size_t j) -> int& { return dist[i * width + j]; };

  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= k; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= k; ++j) {
      const int diag = at(i - 1, j - 1) + (lemma[i - 1] == form[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  Alignment out;
  out.cost = at(n, k);
  std::size_t i = n;
  std::size_t j = k;
  while (i > 0 || j > 0) {
    const int here = at(i, j);
    if (i > 0 && j > 0 && lemma[i - 1] == form[j - 1] && at(i - 1, j - 1) == here) {
      out.pairs.push_back({static_cast<int>(i - 1), static_cast<int>(j - 1)});
      --i;
      --j;
    } else if (i > 0 && j > 0 && lemma[i - 1] != form[j - 1] && at(i - 1, j - 1) + 1 == here) {
      out.pairs.push_back({static_cast<int>(i - 1), static_cast<int>(j - 1)});
      --i;
      --j;
    } else if (i > 0 && at(i - 1, j) + 1 == here) {
      out.pairs.push_back({static_cast<int>(i - 1), kGap});
      --i;
    } else {
      out.pairs.push_back({kGap, static_cast<int>(j - 1)});
      --j;
    }
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  return out;
}

std::vector<StemRegion> find_stem_regions(std::u32string_view lemma, std::u32string_view form, const Alignment& a,
                                          int min_len) {
  std::vector<StemRegion> regions;
  auto identical = [&](const AlignedPair& p) {
    return p.lemma != kGap && p.form != kGap && lemma[static_cast<std::size_t>(p.lemma)] == form[static_cast<std::size_t>(p.form)];
  };
  std::size_t p = 0;
  while (p < a.pairs.size()) {
    if (!identical(a.pairs[p])) {
      ++p;
      continue;
    }
    std::size_t q = p;
    while (q + 1 < a.pairs.size() && identical(a.pairs[q + 1])) ++q;
    const int length = static_cast<int>(q - p + 1);
    if (length >= min_len) {
      regions.push_back({a.pairs[p].lemma, a.pairs[q].lemma + 1, a.pairs[p].form, a.pairs[q].form + 1});
    }
    p = q + 1;
  }
  return regions;
}

std::string format_stem_line(std::u32string_view lemma, std::u32string_view form,
                             std::span<const StemRegion> regions) {
  std::string line = to_utf8(lemma) + '\t' + to_utf8(form) + '\t';
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const StemRegion& s = regions[r];
    if (r) line += ' ';
    line += '[' + std::to_string(s.lemma_start) + ',' + std::to_string(s.lemma_end) + ")=[" +
            std::to_string(s.form_start) + ',' + std::to_string(s.form_end) + "):" +
            to_utf8(lemma.substr(static_cast<std::size_t>(s.lemma_start), static_cast<std::size_t>(s.length())));
  }
  return line;
}

}  // namespace inflect
