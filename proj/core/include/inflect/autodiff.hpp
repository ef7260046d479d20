#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records operations in execution order (define-by-run). Every value
// is a rank-2 matrix; vectors are column vectors of shape [n, 1]. Column-wise
// reductions (softmax, per-column sums) therefore act on each vector as a
// whole.
//
// Parameters live outside the tape in Tensor objects. Binding a Tensor with
// Tape::param() references its storage without copying; backward() adds the
// computed gradient into Tensor::grad(). Calling backward() twice on the same
// tape adds the gradient twice.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace inflect::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Shape {
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Index rows, Index cols, bool requires_grad = false);
  explicit Tensor(Matrix values, bool requires_grad = false);

  static Tensor column(std::initializer_list<double> values, bool requires_grad = false);

  Shape shape() const { return {values_.rows(), values_.cols()}; }
  const Matrix& values() const { return values_; }
  Matrix& values() { return values_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on);

  // Empty matrix when requires_grad() is false.
  const Matrix& grad() const { return grad_; }
  Matrix& grad() { return grad_; }
  void zero_grad();

  // Row-major copy of the values.
  std::vector<double> flat() const;

 private:
  Matrix values_;
  Matrix grad_;
  bool requires_grad_ = false;
};

enum class OpKind : std::uint8_t {
  leaf,
  matmul,
  add,
  elementwise_mul,
  concat,
  tanh,
  sigmoid,
  softmax,
  sum,
  l2_norm,
  pick_row,
  slice_rows,
  logloss,
  scale,
  grad_reverse,
  markov_window,
  custom,
};

const char* op_name(OpKind kind);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Expr {
 public:
  Expr() = default;
  Expr(Tape* tape, std::int32_t index) : tape_(tape), index_(index) {}

  Tape* tape() const { return tape_; }
  std::int32_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Shape shape() const;
  // Gradient of the most recent backward() loss with respect to this node.
  // Empty when no gradient reached the node.
  const Matrix& grad() const;
  // Convenience for [1, 1] values.
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::int32_t index_ = -1;
};

// Attributes for ops that need more than their inputs.
struct OpAttrs {
  bool transpose_a = false;  // matmul: use A^T
  int axis = -1;             // concat: 0 rows / 1 cols; sum: -1 all, 0, 1
  Index index = 0;           // pick_row row, logloss class, slice_rows start
  Index count = 0;           // slice_rows length
  double factor = 1.0;       // scale multiplier, grad_reverse lambda
  double shift = 0.0;        // scale offset
};

// User-defined node. `backward` receives the inputs' values, this node's
// value and upstream gradient, and must return one gradient per input
// (an empty matrix means "no contribution").
struct CustomOp {
  std::string name;
  std::function<Matrix(std::span<const Matrix* const>)> forward;
  std::function<std::vector<Matrix>(std::span<const Matrix* const>, const Matrix& out, const Matrix& upstream)>
      backward;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Owned constant; no gradient.
  Expr constant(Matrix values);
  // Borrowed parameter storage. Gradients accumulate into t.grad() when
  // t.requires_grad(). `t` must outlive the tape.
  Expr param(Tensor& t);
  // Borrowed read-only storage (inference).
  Expr param(const Tensor& t);

  Expr push(OpKind kind, std::span<const Expr> inputs, Matrix value, const OpAttrs& attrs = {});
  Expr push_custom(std::span<const Expr> inputs, const CustomOp& op);

  // Requires a [1, 1] loss recorded on this tape.
  void backward(Expr loss);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(Expr e) const { return nodes_[check(e)].kind; }
  const Matrix& value(Expr e) const;
  const Matrix& grad(Expr e) const { return nodes_[check(e)].grad; }
  bool requires_grad(Expr e) const { return nodes_[check(e)].requires_grad; }
  // Input node indices of `e` (always smaller than e.index()).
  std::vector<std::int32_t> inputs(Expr e) const;

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    bool requires_grad = false;
    Matrix value;
    Matrix grad;
    const Tensor* borrowed = nullptr;
    Tensor* grad_sink = nullptr;
    std::int32_t in0 = -1;
    std::int32_t in1 = -1;
    std::vector<std::int32_t> extra_inputs;  // concat and custom only
    OpAttrs attrs;
    std::shared_ptr<const CustomOp> custom;
  };

  std::int32_t check(Expr e) const;
  const Matrix& node_value(std::int32_t i) const;
  // Zero-initialized gradient buffer of node i, or nullptr when i does not
  // require a gradient.
  Matrix* grad_buffer(std::int32_t i);
  void propagate(std::int32_t i);

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. Each throws DimensionError on non-conforming shapes.

Expr apply(OpKind kind, std::span<const Expr> inputs, const OpAttrs& attrs = {});

Expr matmul(Expr a, Expr b, bool transpose_a = false);
// Same shapes, or `b` broadcast as a column [r, 1] or row [1, c] of `a`.
Expr add(Expr a, Expr b);
Expr elementwise_mul(Expr a, Expr b);
// axis 0 stacks rows, axis 1 stacks columns.
Expr concat(std::span<const Expr> parts, int axis);
Expr tanh(Expr a);
Expr sigmoid(Expr a);
// Normalizes each column. DomainError on zero rows.
Expr softmax(Expr a);
// axis -1 sums everything to [1, 1]; axis 0 gives column sums [1, c];
// axis 1 gives row sums [r, 1].
Expr sum(Expr a, int axis = -1);
Expr l2_norm(Expr a);
// Row `row` of a matrix, returned as a column vector.
Expr pick_row(Expr a, Index row);
Expr slice_rows(Expr a, Index start, Index count);
// -log(p[index]) for a probability column vector p.
Expr logloss(Expr probs, Index index);
// factor * a + shift
Expr scale(Expr a, double factor, double shift = 0.0);
// Identity forward; backward multiplies the upstream gradient by -lambda.
Expr grad_reverse(Expr a, double lambda = 1.0);
// For a column p of length n returns [3, n] with rows p[j-1], p[j], p[j+1]
// (zero outside the range).
Expr markov_window(Expr prev);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

using ScalarFn = std::function<Expr(Tape&, Expr)>;

// Max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// with central differences of step eps. UsageError when f is not scalar or
// eps <= 0.
double grad_check(const ScalarFn& f, const Tensor& point, double eps = 1e-5);

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

// Checks d loss / d t for every named tensor. `loss` builds the scalar on a
// fresh tape (binding parameters with Tape::param) and must be deterministic.
// `max_coords` > 0 limits the number of coordinates checked per tensor,
// picked evenly across the tensor.
std::vector<GradCheckResult> grad_check_tensors(const std::function<Expr(Tape&)>& loss,
                                                std::span<const std::pair<std::string, Tensor*>> tensors,
                                                double eps = 1e-5, std::size_t max_coords = 0);

double relative_error(double analytic, double numeric);

}  // namespace inflect::ad
