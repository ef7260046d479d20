#include "inflect/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "inflect/error.hpp"
#include "inflect/random.hpp"
#include "oracles.hpp"

namespace inflect::ad {
namespace {

Matrix random_matrix(Rng& rng, Index rows, Index cols, double lo = -2.0, double hi = 2.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * uniform01(rng);
  return m;
}

TEST(Autodiff, SoftmaxOfEqualScoresIsUniform) {
  Tape t;
  const Expr p = softmax(t.constant(Matrix::Zero(2, 1)));
  EXPECT_DOUBLE_EQ(p.value()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p.value()(1, 0), 0.5);
}

TEST(Autodiff, TanhOfZeroAndReversalForwardAreIdentities) {
  Tape t;
  EXPECT_EQ(tanh(t.constant(Matrix::Zero(1, 1))).scalar(), 0.0);
  Rng rng(3);
  const Matrix v = random_matrix(rng, 4, 2);
  const Expr r = grad_reverse(t.constant(v), 0.7);
  EXPECT_TRUE(r.value() == v);
}

TEST(Autodiff, SquareSumDerivativeMatchesFiniteDifference) {
  Tensor x = Tensor::column({3.0}, true);
  Tape t;
  const Expr e = t.param(x);
  t.backward(sum(elementwise_mul(e, e)));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
  const double numeric = testing::central_difference([](const Matrix& m) { return m.cwiseProduct(m).sum(); },
                                                     x.values(), 0);
  EXPECT_LT(relative_error(x.grad()(0, 0), numeric), 1e-6);
}

TEST(Autodiff, SumGradientIsOnes) {
  Tensor w = Tensor::column({0.3, -1.0, 2.0}, true);
  Tape t;
  t.backward(sum(t.param(w)));
  EXPECT_TRUE(w.grad() == Matrix::Ones(3, 1));
}

TEST(Autodiff, LoglossOfSoftmaxGradientIsProbabilitiesMinusOneHot) {
  Tensor z = Tensor::column({0.5, -1.2, 2.0, 0.1}, true);
  Tape t;
  const Expr p = softmax(t.param(z));
  t.backward(logloss(p, 2));
  Matrix expected = p.value();
  expected(2, 0) -= 1.0;
  EXPECT_LT((z.grad() - expected).cwiseAbs().maxCoeff(), 1e-12);
  for (Index i = 0; i < 4; ++i) {
    const double numeric = testing::central_difference(
        [](const Matrix& m) {
          const Matrix e = (m.array() - m.maxCoeff()).exp();
          return -std::log(e(2, 0) / e.sum());
        },
        z.values(), i);
    EXPECT_LT(relative_error(z.grad()(i, 0), numeric), 1e-6) << i;
  }
}

TEST(Autodiff, SecondBackwardDoublesGradients) {
  Tensor w = Tensor::column({1.0, 2.0}, true);
  Tape t;
  const Expr loss = sum(elementwise_mul(t.param(w), t.param(w)));
  t.backward(loss);
  const Matrix once = w.grad();
  t.backward(loss);
  EXPECT_TRUE(w.grad() == 2.0 * once);
}

TEST(Autodiff, BackwardRejectsNonScalarLoss) {
  Tape t;
  const Expr v = t.constant(Matrix::Ones(2, 1));
  EXPECT_THROW(t.backward(v), UsageError);
}

TEST(Autodiff, ShapeErrors) {
  Tape t;
  const Expr a = t.constant(Matrix::Ones(2, 3));
  const Expr b = t.constant(Matrix::Ones(2, 3));
  EXPECT_THROW(matmul(a, b), DimensionError);
  EXPECT_THROW(add(a, t.constant(Matrix::Ones(3, 3))), DimensionError);
  EXPECT_THROW(softmax(t.constant(Matrix(0, 1))), DomainError);
  EXPECT_THROW(pick_row(a, 2), DimensionError);
}

TEST(Autodiff, GradCheckOfSumIsExact) {
  Rng rng(5);
  const Tensor point(random_matrix(rng, 3, 2));
  EXPECT_LT(grad_check([](Tape&, Expr x) { return sum(x); }, point), 1e-9);
}

TEST(Autodiff, GradCheckDetectsWrongBackwardRule) {
  CustomOp cube;
  cube.name = "cube";
  cube.forward = [](std::span<const Matrix* const> in) -> Matrix { return in[0]->array().cube().matrix(); };
  // Deliberately wrong: the true derivative is 3x^2.
  cube.backward = [](std::span<const Matrix* const> in, const Matrix&, const Matrix& g) {
    return std::vector<Matrix>{(2.0 * in[0]->array().square() * g.array()).matrix()};
  };
  Rng rng(6);
  const Tensor point(random_matrix(rng, 3, 1, 0.5, 2.0));
  const double err = grad_check(
      [&](Tape& t, Expr x) {
        const Expr in[] = {x};
        return sum(t.push_custom(in, cube));
      },
      point);
  EXPECT_GT(err, 1e-2);
}

TEST(Autodiff, GradReverseNegatesAndScalesUpstream) {
  Tensor x = Tensor::column({0.4, -0.3}, true);
  Tensor y = Tensor::column({0.4, -0.3}, true);
  const Matrix weights = Matrix::Constant(2, 1, 1.5);
  {
    Tape t;
    const Expr w = t.constant(weights);
    t.backward(sum(elementwise_mul(tanh(t.param(x)), w)));
  }
  {
    Tape t;
    const Expr w = t.constant(weights);
    t.backward(sum(elementwise_mul(tanh(grad_reverse(t.param(y), 0.25)), w)));
  }
  for (Index i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(y.grad()(i, 0), -0.25 * x.grad()(i, 0));
}

TEST(Autodiff, SoftmaxColumnsAreDistributions) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    Tape t;
    const Matrix p = softmax(t.constant(random_matrix(rng, 5, 3, -30.0, 30.0))).value();
    EXPECT_GE(p.minCoeff(), 0.0);
    for (Index c = 0; c < p.cols(); ++c) EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-9);
  }
}

TEST(Autodiff, TapeIsTopologicalAndDeterministic) {
  Rng rng(8);
  const Matrix a = random_matrix(rng, 3, 3);
  const Matrix b = random_matrix(rng, 3, 1);
  auto build = [&](Tape& t) { return softmax(tanh(add(matmul(t.constant(a), t.constant(b)), t.constant(b)))); };
  Tape t1, t2;
  const Expr r1 = build(t1);
  const Expr r2 = build(t2);
  EXPECT_TRUE(r1.value() == r2.value());
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(t1.size()); ++i)
    for (std::int32_t in : t1.inputs(Expr(&t1, i))) EXPECT_LT(in, i);
}

TEST(Autodiff, MarkovWindowShiftsWithZeroPadding) {
  Tape t;
  const Expr w = markov_window(t.constant(Tensor::column({0.2, 0.5, 0.3}).values()));
  Matrix expected(3, 3);
  expected << 0.0, 0.2, 0.5,  //
      0.2, 0.5, 0.3,          //
      0.5, 0.3, 0.0;
  EXPECT_TRUE(w.value() == expected);
}

struct PrimitiveCase {
  const char* name;
  Index rows, cols;
  std::function<Expr(Tape&, Expr, Rng&)> op;
};

// Every primitive, checked through sum(op(x) * R) with a random fixed R so
// that no output coordinate is weighted trivially.
class PrimitiveGradient : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferencesAtRandomPoints) {
  const PrimitiveCase& c = GetParam();
  Rng rng(derive_seed(11, c.name));
  double worst = 0.0;
  for (int point = 0; point < 100; ++point) {
    const Tensor x(random_matrix(rng, c.rows, c.cols));
    const std::uint64_t op_seed = rng();
    const double err = grad_check(
        [&](Tape& t, Expr in) {
          Rng local(op_seed);
          const Expr y = c.op(t, in, local);
          const Expr r = t.constant(random_matrix(local, y.shape().rows, y.shape().cols, 0.5, 1.5));
          return sum(elementwise_mul(y, r));
        },
        x);
    worst = std::max(worst, err);
  }
  EXPECT_LT(worst, 1e-6) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    Autodiff, PrimitiveGradient,
    ::testing::Values(
        PrimitiveCase{"matmul_left", 3, 4, [](Tape& t, Expr x, Rng& r) { return matmul(x, t.constant(random_matrix(r, 4, 2))); }},
        PrimitiveCase{"matmul_right", 4, 2, [](Tape& t, Expr x, Rng& r) { return matmul(t.constant(random_matrix(r, 3, 4)), x); }},
        PrimitiveCase{"matmul_transposed", 4, 3,
                      [](Tape& t, Expr x, Rng& r) { return matmul(x, t.constant(random_matrix(r, 4, 2)), true); }},
        PrimitiveCase{"matmul_self", 3, 3, [](Tape&, Expr x, Rng&) { return matmul(x, x, true); }},
        PrimitiveCase{"add_same", 3, 2, [](Tape& t, Expr x, Rng& r) { return add(x, t.constant(random_matrix(r, 3, 2))); }},
        PrimitiveCase{"add_column_broadcast", 3, 1,
                      [](Tape& t, Expr x, Rng& r) { return add(t.constant(random_matrix(r, 3, 4)), x); }},
        PrimitiveCase{"add_row_broadcast", 1, 4,
                      [](Tape& t, Expr x, Rng& r) { return add(t.constant(random_matrix(r, 3, 4)), x); }},
        PrimitiveCase{"elementwise_mul", 3, 2,
                      [](Tape& t, Expr x, Rng& r) { return elementwise_mul(x, t.constant(random_matrix(r, 3, 2))); }},
        PrimitiveCase{"elementwise_square", 3, 2, [](Tape&, Expr x, Rng&) { return elementwise_mul(x, x); }},
        PrimitiveCase{"concat_rows", 2, 1,
                      [](Tape& t, Expr x, Rng& r) {
                        const Expr parts[] = {x, t.constant(random_matrix(r, 3, 1)), x};
                        return concat(parts, 0);
                      }},
        PrimitiveCase{"concat_cols", 3, 1,
                      [](Tape& t, Expr x, Rng& r) {
                        const Expr parts[] = {t.constant(random_matrix(r, 3, 2)), x};
                        return concat(parts, 1);
                      }},
        PrimitiveCase{"tanh", 4, 2, [](Tape&, Expr x, Rng&) { return tanh(x); }},
        PrimitiveCase{"sigmoid", 4, 2, [](Tape&, Expr x, Rng&) { return sigmoid(x); }},
        PrimitiveCase{"softmax", 5, 2, [](Tape&, Expr x, Rng&) { return softmax(x); }},
        PrimitiveCase{"sum_all", 3, 2, [](Tape&, Expr x, Rng&) { return sum(x); }},
        PrimitiveCase{"sum_rows", 3, 2, [](Tape&, Expr x, Rng&) { return sum(x, 0); }},
        PrimitiveCase{"sum_cols", 3, 2, [](Tape&, Expr x, Rng&) { return sum(x, 1); }},
        PrimitiveCase{"l2_norm", 4, 1, [](Tape&, Expr x, Rng&) { return l2_norm(x); }},
        PrimitiveCase{"pick_row", 4, 3, [](Tape&, Expr x, Rng&) { return pick_row(x, 2); }},
        PrimitiveCase{"slice_rows", 5, 2, [](Tape&, Expr x, Rng&) { return slice_rows(x, 1, 3); }},
        PrimitiveCase{"logloss", 4, 1, [](Tape&, Expr x, Rng&) { return logloss(softmax(x), 1); }},
        PrimitiveCase{"scale", 3, 2, [](Tape&, Expr x, Rng&) { return scale(x, -1.7, 0.4); }},
        PrimitiveCase{"markov_window", 5, 1, [](Tape&, Expr x, Rng&) { return markov_window(x); }}),
    [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace inflect::ad
