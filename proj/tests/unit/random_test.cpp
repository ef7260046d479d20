#include "inflect/random.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <vector>

#include "oracles.hpp"

namespace inflect {
namespace {

TEST(Random, StreamsAreReproducibleAndIndependent) {
  EXPECT_EQ(derive_seed(1, "init"), derive_seed(1, "init"));
  EXPECT_NE(derive_seed(1, "init"), derive_seed(2, "init"));
  EXPECT_NE(derive_seed(1, "init"), derive_seed(1, "phase1-shuffle"));
  EXPECT_NE(derive_seed(1, "phase1-shuffle", 0), derive_seed(1, "phase1-shuffle", 1));
  Rng a = make_stream(3, "x", 4);
  Rng b = make_stream(3, "x", 4);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
}

TEST(Random, UniformIndexIsUniform) {
  Rng rng(17);
  std::vector<std::size_t> counts(12);
  for (int i = 0; i < 120000; ++i) ++counts[uniform_index(rng, counts.size())];
  EXPECT_GT(testing::chi_squared_uniform_p(counts), 1e-3);
}

TEST(Random, Uniform01RangeAndBernoulliEdges) {
  Rng rng(2);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000.0, 0.5, 0.01);
  for (int i = 0; i < 100; ++i) {
    EXPECT_FALSE(bernoulli(rng, 0.0));
    EXPECT_TRUE(bernoulli(rng, 1.0));
  }
}

TEST(Random, ShuffleIsAPermutation) {
  Rng rng(8);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  shuffle(std::span<int>(w), rng);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

}  // namespace
}  // namespace inflect
