#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

namespace inflect::testing {

int brute_levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.empty()) return static_cast<int>(b.size());
  if (b.empty()) return static_cast<int>(a.size());
  const int substitute = brute_levenshtein(a.substr(1), b.substr(1)) + (a[0] == b[0] ? 0 : 1);
  if (a[0] == b[0]) return substitute;  // matching the heads is never worse
  const int remove = brute_levenshtein(a.substr(1), b) + 1;
  const int insert = brute_levenshtein(a, b.substr(1)) + 1;
  return std::min({substitute, remove, insert});
}

double loop_coverage(const Eigen::MatrixXd& w, double lambda) {
  double squared = 0.0;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    double column = 0.0;
    for (Eigen::Index k = 0; k < w.rows(); ++k) column += w(k, j);
    squared += (column - 1.0) * (column - 1.0);
  }
  return lambda * std::sqrt(squared);
}

ReplayedSlots replay_checkpoints(std::span<const Metric> sequence) {
  ReplayedSlots s;
  for (int i = 0; i < static_cast<int>(sequence.size()); ++i) {
    const Metric& m = sequence[static_cast<std::size_t>(i)];
    if (s.accuracy < 0 || m.accuracy > sequence[static_cast<std::size_t>(s.accuracy)].accuracy) s.accuracy = i;
    if (s.levenshtein < 0 || m.distance < sequence[static_cast<std::size_t>(s.levenshtein)].distance) s.levenshtein = i;
    if (s.both < 0) {
      s.both = i;
    } else {
      const Metric& held = sequence[static_cast<std::size_t>(s.both)];
      if (m.accuracy > held.accuracy && m.distance < held.distance) s.both = i;
    }
  }
  return s;
}

double chi_squared_uniform_p(std::span<const std::size_t> counts) {
  double total = 0.0;
  for (std::size_t c : counts) total += static_cast<double>(c);
  const double expected = total / static_cast<double>(counts.size());
  double statistic = 0.0;
  for (std::size_t c : counts) {
    const double d = static_cast<double>(c) - expected;
    statistic += d * d / expected;
  }
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

}  // namespace inflect::testing
