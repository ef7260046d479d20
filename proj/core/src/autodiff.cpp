#include "inflect/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "inflect/error.hpp"

namespace inflect::ad {

namespace {

std::string shapes_of(std::span<const Expr> inputs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i) os << ", ";
    os << inputs[i].shape().str();
  }
  return os.str();
}

[[noreturn]] void dimension_error(OpKind kind, std::span<const Expr> inputs, const std::string& detail = {}) {
  std::string msg = std::string(op_name(kind)) + ": non-conforming shapes (" + shapes_of(inputs) + ")";
  if (!detail.empty()) msg += ": " + detail;
  throw DimensionError(msg);
}

Tape& tape_of(std::span<const Expr> inputs, OpKind kind) {
  if (inputs.empty() || !inputs[0].valid()) throw UsageError(std::string(op_name(kind)) + ": missing input");
  Tape* t = inputs[0].tape();
  for (const Expr& e : inputs)
    if (e.tape() != t) throw UsageError(std::string(op_name(kind)) + ": inputs recorded on different tapes");
  return *t;
}

void require_arity(OpKind kind, std::span<const Expr> inputs, std::size_t n) {
  if (inputs.size() != n)
    throw UsageError(std::string(op_name(kind)) + ": expected " + std::to_string(n) + " inputs, got " +
                     std::to_string(inputs.size()));
}

}  // namespace

std::string Shape::str() const {
  return "[" + std::to_string(rows) + ", " + std::to_string(cols) + "]";
}

Tensor::Tensor(Index rows, Index cols, bool requires_grad) : values_(Matrix::Zero(rows, cols)) {
  set_requires_grad(requires_grad);
}

Tensor::Tensor(Matrix values, bool requires_grad) : values_(std::move(values)) { set_requires_grad(requires_grad); }

Tensor Tensor::column(std::initializer_list<double> values, bool requires_grad) {
  Matrix m(static_cast<Index>(values.size()), 1);
  Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    grad_ = Matrix::Zero(values_.rows(), values_.cols());
  } else {
    grad_.resize(0, 0);
  }
}

void Tensor::zero_grad() {
  if (requires_grad_) grad_.setZero(values_.rows(), values_.cols());
}

std::vector<double> Tensor::flat() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(values_.size()));
  for (Index r = 0; r < values_.rows(); ++r)
    for (Index c = 0; c < values_.cols(); ++c) out.push_back(values_(r, c));
  return out;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::elementwise_mul: return "elementwise_mul";
    case OpKind::concat: return "concat";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax: return "softmax";
    case OpKind::sum: return "sum";
    case OpKind::l2_norm: return "l2_norm";
    case OpKind::pick_row: return "pick_row";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::logloss: return "logloss";
    case OpKind::scale: return "scale";
    case OpKind::grad_reverse: return "grad_reverse";
    case OpKind::markov_window: return "markov_window";
    case OpKind::custom: return "custom";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Expr

const Matrix& Expr::value() const { return tape_->value(*this); }
Shape Expr::shape() const {
  const Matrix& v = value();
  return {v.rows(), v.cols()};
}
const Matrix& Expr::grad() const { return tape_->grad(*this); }
double Expr::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw UsageError("scalar(): value has shape " + shape().str());
  return v(0, 0);
}

// ---------------------------------------------------------------------------
// Tape

std::int32_t Tape::check(Expr e) const {
  if (e.tape() != this || e.index() < 0 || static_cast<std::size_t>(e.index()) >= nodes_.size())
    throw UsageError("expression does not belong to this tape");
  return e.index();
}

const Matrix& Tape::node_value(std::int32_t i) const {
  const Node& n = nodes_[static_cast<std::size_t>(i)];
  return n.borrowed ? n.borrowed->values() : n.value;
}

const Matrix& Tape::value(Expr e) const { return node_value(check(e)); }

std::vector<std::int32_t> Tape::inputs(Expr e) const {
  const Node& n = nodes_[check(e)];
  std::vector<std::int32_t> out;
  if (n.in0 >= 0) out.push_back(n.in0);
  if (n.in1 >= 0) out.push_back(n.in1);
  out.insert(out.end(), n.extra_inputs.begin(), n.extra_inputs.end());
  return out;
}

Expr Tape::constant(Matrix values) {
  Node n;
  n.value = std::move(values);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Expr Tape::param(Tensor& t) {
  Node n;
  n.borrowed = &t;
  if (t.requires_grad()) {
    n.requires_grad = true;
    n.grad_sink = &t;
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Expr Tape::param(const Tensor& t) {
  Node n;
  n.borrowed = &t;
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Expr Tape::push(OpKind kind, std::span<const Expr> inputs, Matrix value, const OpAttrs& attrs) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.attrs = attrs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::int32_t idx = check(inputs[i]);
    n.requires_grad = n.requires_grad || nodes_[idx].requires_grad;
    if (kind == OpKind::concat || kind == OpKind::custom) {
      n.extra_inputs.push_back(idx);
    } else if (i == 0) {
      n.in0 = idx;
    } else {
      n.in1 = idx;
    }
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Expr Tape::push_custom(std::span<const Expr> inputs, const CustomOp& op) {
  std::vector<const Matrix*> values;
  values.reserve(inputs.size());
  for (const Expr& e : inputs) values.push_back(&value(e));
  Matrix out = op.forward(values);
  Expr e = push(OpKind::custom, inputs, std::move(out));
  nodes_.back().custom = std::make_shared<const CustomOp>(op);
  return e;
}

Matrix* Tape::grad_buffer(std::int32_t i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() == 0) {
    const Matrix& v = node_value(i);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return &n.grad;
}

void Tape::backward(Expr loss) {
  const std::int32_t root = check(loss);
  const Matrix& lv = node_value(root);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw UsageError("backward: loss must be a scalar, got shape [" + std::to_string(lv.rows()) + ", " +
                     std::to_string(lv.cols()) + "]");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad = Matrix::Ones(1, 1);
  for (std::int32_t i = root; i >= 0; --i) {
    if (nodes_[i].grad.size() == 0) continue;
    propagate(i);
  }
}

void Tape::propagate(std::int32_t i) {
  // grad_buffer() never reallocates nodes_, so these references stay valid.
  Node& n = nodes_[static_cast<std::size_t>(i)];
  const Matrix& g = n.grad;
  const Matrix& y = node_value(i);
  switch (n.kind) {
    case OpKind::leaf:
      if (n.grad_sink) n.grad_sink->grad() += g;
      break;
    case OpKind::matmul: {
      const Matrix& a = node_value(n.in0);
      const Matrix& b = node_value(n.in1);
      if (n.attrs.transpose_a) {
        // y = a^T b
        if (Matrix* ga = grad_buffer(n.in0)) ga->noalias() += b * g.transpose();
        if (Matrix* gb = grad_buffer(n.in1)) gb->noalias() += a * g;
      } else {
        if (Matrix* ga = grad_buffer(n.in0)) ga->noalias() += g * b.transpose();
        if (Matrix* gb = grad_buffer(n.in1)) gb->noalias() += a.transpose() * g;
      }
      break;
    }
    case OpKind::add: {
      if (Matrix* ga = grad_buffer(n.in0)) *ga += g;
      if (Matrix* gb = grad_buffer(n.in1)) {
        // Same dispatch order as the forward pass in add().
        if (gb->rows() == g.rows() && gb->cols() == g.cols()) {
          *gb += g;
        } else if (gb->cols() == 1 && gb->rows() == g.rows()) {
          *gb += g.rowwise().sum();
        } else {
          *gb += g.colwise().sum();
        }
      }
      break;
    }
    case OpKind::elementwise_mul: {
      const Matrix& a = node_value(n.in0);
      const Matrix& b = node_value(n.in1);
      if (Matrix* ga = grad_buffer(n.in0)) *ga += g.cwiseProduct(b);
      if (Matrix* gb = grad_buffer(n.in1)) *gb += g.cwiseProduct(a);
      break;
    }
    case OpKind::concat: {
      Index offset = 0;
      for (std::int32_t in : n.extra_inputs) {
        const Matrix& part = node_value(in);
        if (n.attrs.axis == 0) {
          if (Matrix* gp = grad_buffer(in)) *gp += g.middleRows(offset, part.rows());
          offset += part.rows();
        } else {
          if (Matrix* gp = grad_buffer(in)) *gp += g.middleCols(offset, part.cols());
          offset += part.cols();
        }
      }
      break;
    }
    case OpKind::tanh:
      if (Matrix* ga = grad_buffer(n.in0)) ga->array() += g.array() * (1.0 - y.array().square());
      break;
    case OpKind::sigmoid:
      if (Matrix* ga = grad_buffer(n.in0)) ga->array() += g.array() * y.array() * (1.0 - y.array());
      break;
    case OpKind::softmax:
      if (Matrix* ga = grad_buffer(n.in0)) {
        for (Index c = 0; c < y.cols(); ++c) {
          const double dot = y.col(c).dot(g.col(c));
          ga->col(c).array() += y.col(c).array() * (g.col(c).array() - dot);
        }
      }
      break;
    case OpKind::sum:
      if (Matrix* ga = grad_buffer(n.in0)) {
        if (n.attrs.axis == -1) {
          ga->array() += g(0, 0);
        } else if (n.attrs.axis == 0) {
          ga->rowwise() += g.row(0);
        } else {
          ga->colwise() += g.col(0);
        }
      }
      break;
    case OpKind::l2_norm:
      if (Matrix* ga = grad_buffer(n.in0)) {
        const double norm = y(0, 0);
        if (norm > 0.0) *ga += (g(0, 0) / norm) * node_value(n.in0);
      }
      break;
    case OpKind::pick_row:
      if (Matrix* ga = grad_buffer(n.in0)) ga->row(n.attrs.index) += g.col(0).transpose();
      break;
    case OpKind::slice_rows:
      if (Matrix* ga = grad_buffer(n.in0)) ga->middleRows(n.attrs.index, n.attrs.count) += g;
      break;
    case OpKind::logloss:
      if (Matrix* ga = grad_buffer(n.in0)) {
        const double p = node_value(n.in0)(n.attrs.index, 0);
        (*ga)(n.attrs.index, 0) -= g(0, 0) / p;
      }
      break;
    case OpKind::scale:
      if (Matrix* ga = grad_buffer(n.in0)) *ga += n.attrs.factor * g;
      break;
    case OpKind::grad_reverse:
      if (Matrix* ga = grad_buffer(n.in0)) *ga -= n.attrs.factor * g;
      break;
    case OpKind::markov_window:
      if (Matrix* ga = grad_buffer(n.in0)) {
        const Index len = g.cols();
        for (Index j = 0; j < len; ++j) {
          double acc = g(1, j);
          if (j + 1 < len) acc += g(0, j + 1);
          if (j > 0) acc += g(2, j - 1);
          (*ga)(j, 0) += acc;
        }
      }
      break;
    case OpKind::custom: {
      std::vector<const Matrix*> values;
      values.reserve(n.extra_inputs.size());
      for (std::int32_t in : n.extra_inputs) values.push_back(&node_value(in));
      const std::vector<Matrix> grads = n.custom->backward(values, y, g);
      for (std::size_t k = 0; k < n.extra_inputs.size() && k < grads.size(); ++k) {
        if (grads[k].size() == 0) continue;
        if (Matrix* gp = grad_buffer(n.extra_inputs[k])) *gp += grads[k];
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Primitives

Expr matmul(Expr a, Expr b, bool transpose_a) {
  const Expr in[] = {a, b};
  Tape& t = tape_of(in, OpKind::matmul);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  OpAttrs attrs;
  attrs.transpose_a = transpose_a;
  if (transpose_a) {
    if (av.rows() != bv.rows()) dimension_error(OpKind::matmul, in, "inner dimensions differ (A transposed)");
    Matrix out = av.transpose() * bv;
    return t.push(OpKind::matmul, in, std::move(out), attrs);
  }
  if (av.cols() != bv.rows()) dimension_error(OpKind::matmul, in, "inner dimensions differ");
  Matrix out = av * bv;
  return t.push(OpKind::matmul, in, std::move(out), attrs);
}

Expr add(Expr a, Expr b) {
  const Expr in[] = {a, b};
  Tape& t = tape_of(in, OpKind::add);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    out = av + bv;
  } else if (bv.cols() == 1 && bv.rows() == av.rows()) {
    out = av.colwise() + bv.col(0);
  } else if (bv.rows() == 1 && bv.cols() == av.cols()) {
    out = av.rowwise() + bv.row(0);
  } else {
    dimension_error(OpKind::add, in);
  }
  return t.push(OpKind::add, in, std::move(out));
}

Expr elementwise_mul(Expr a, Expr b) {
  const Expr in[] = {a, b};
  Tape& t = tape_of(in, OpKind::elementwise_mul);
  if (a.shape() != b.shape()) dimension_error(OpKind::elementwise_mul, in);
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(OpKind::elementwise_mul, in, std::move(out));
}

Expr concat(std::span<const Expr> parts, int axis) {
  Tape& t = tape_of(parts, OpKind::concat);
  if (axis != 0 && axis != 1) throw UsageError("concat: axis must be 0 or 1");
  Index rows = 0;
  Index cols = 0;
  for (const Expr& p : parts) {
    const Shape s = p.shape();
    if (axis == 0) {
      if (rows == 0 && cols == 0) cols = s.cols;
      if (s.cols != cols) dimension_error(OpKind::concat, parts, "column counts differ");
      rows += s.rows;
    } else {
      if (rows == 0 && cols == 0) rows = s.rows;
      if (s.rows != rows) dimension_error(OpKind::concat, parts, "row counts differ");
      cols += s.cols;
    }
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Expr& p : parts) {
    const Matrix& v = p.value();
    if (axis == 0) {
      out.middleRows(offset, v.rows()) = v;
      offset += v.rows();
    } else {
      out.middleCols(offset, v.cols()) = v;
      offset += v.cols();
    }
  }
  OpAttrs attrs;
  attrs.axis = axis;
  return t.push(OpKind::concat, parts, std::move(out), attrs);
}

Expr tanh(Expr a) {
  const Expr in[] = {a};
  Tape& t = tape_of(in, OpKind::tanh);
  Matrix out = a.value().array().tanh().matrix();
  return t.push(OpKind::tanh, in, std::move(out));
}

Expr sigmoid(Expr a) {
  const Expr in[] = {a};
  Tape& t = tape_of(in, OpKind::sigmoid);
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.push(OpKind::sigmoid, in, std::move(out));
}

Expr softmax(Expr a) {
  const Expr in[] = {a};
  Tape& t = tape_of(in, OpKind::softmax);
  const Matrix& v = a.value();
  if (v.rows() == 0) throw DomainError("softmax: empty axis (input shape " + a.shape().str() + ")");
  Matrix out(v.rows(), v.cols());
  for (Index c = 0; c < v.cols(); ++c) {
    const double mx = v.col(c).maxCoeff();
    out.col(c) = (v.col(c).array() - mx).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return t.push(OpKind::softmax, in, std::move(out));
}

Expr sum(Expr a, int axis) {
  const Expr in[] = {a};
  Tape& t = tape_of(in, OpKind::sum);
  const Matrix& v = a.value();
  Matrix out;
  if (axis == -1) {
    out = Matrix::Constant(1, 1, v.sum());
  } else if (axis == 0) {
    out = v.colwise().sum();
  } else if (axis == 1) {
    out = v.rowwise().sum();
  } else {
    throw UsageError("sum: axis must be -1, 0 or 1");
  }
  OpAttrs attrs;
  attrs.axis = axis;
  return t.push(OpKind::sum, in, std::move(out), attrs);
}

Expr l2_norm(Expr a) {
  const Expr in[] = {a};
  Tape& t = tape_of(in, OpKind::l2_norm);
  Matrix out = Matrix::Constant(1, 1, a.value().norm());
  return t.push(OpKind::l2_norm, in, std::move(out));
}

Expr pick_row(Expr a, Index row) {
  const Expr in[] = {a};
  Tape& t = tape_of(in, OpKind::pick_row);
  const Matrix& v = a.value();
  if (row < 0 || row >= v.rows())
    dimension_error(OpKind::pick_row, in, "row " + std::to_string(row) + " out of range");
  Matrix out = v.row(row).transpose();
  OpAttrs attrs;
  attrs.index = row;
  return t.push(OpKind::pick_row, in, std::move(out), attrs);
}

Expr slice_rows(Expr a, Index start, Index count) {
  const Expr in[] = {a};
  Tape& t = tape_of(in, OpKind::slice_rows);
  const Matrix& v = a.value();
  if (start < 0 || count < 0 || start + count > v.rows())
    dimension_error(OpKind::slice_rows, in,
                    "rows [" + std::to_string(start) + ", " + std::to_string(start + count) + ") out of range");
  Matrix out = v.middleRows(start, count);
  OpAttrs attrs;
  attrs.index = start;
  attrs.count = count;
  return t.push(OpKind::slice_rows, in, std::move(out), attrs);
}

Expr logloss(Expr probs, Index index) {
  const Expr in[] = {probs};
  Tape& t = tape_of(in, OpKind::logloss);
  const Matrix& v = probs.value();
  if (v.cols() != 1) dimension_error(OpKind::logloss, in, "expected a column vector");
  if (index < 0 || index >= v.rows())
    dimension_error(OpKind::logloss, in, "class " + std::to_string(index) + " out of range");
  Matrix out = Matrix::Constant(1, 1, -std::log(v(index, 0)));
  OpAttrs attrs;
  attrs.index = index;
  return t.push(OpKind::logloss, in, std::move(out), attrs);
}

Expr scale(Expr a, double factor, double shift) {
  const Expr in[] = {a};
  Tape& t = tape_of(in, OpKind::scale);
  Matrix out = (factor * a.value().array() + shift).matrix();
  OpAttrs attrs;
  attrs.factor = factor;
  attrs.shift = shift;
  return t.push(OpKind::scale, in, std::move(out), attrs);
}

Expr grad_reverse(Expr a, double lambda) {
  const Expr in[] = {a};
  Tape& t = tape_of(in, OpKind::grad_reverse);
  OpAttrs attrs;
  attrs.factor = lambda;
  return t.push(OpKind::grad_reverse, in, Matrix(a.value()), attrs);
}

Expr markov_window(Expr prev) {
  const Expr in[] = {prev};
  Tape& t = tape_of(in, OpKind::markov_window);
  const Matrix& p = prev.value();
  if (p.cols() != 1) dimension_error(OpKind::markov_window, in, "expected a column vector");
  const Index n = p.rows();
  Matrix out = Matrix::Zero(3, n);
  for (Index j = 0; j < n; ++j) {
    if (j > 0) out(0, j) = p(j - 1, 0);
    out(1, j) = p(j, 0);
    if (j + 1 < n) out(2, j) = p(j + 1, 0);
  }
  return t.push(OpKind::markov_window, in, std::move(out));
}

Expr apply(OpKind kind, std::span<const Expr> inputs, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::matmul:
      require_arity(kind, inputs, 2);
      return matmul(inputs[0], inputs[1], attrs.transpose_a);
    case OpKind::add:
      require_arity(kind, inputs, 2);
      return add(inputs[0], inputs[1]);
    case OpKind::elementwise_mul:
      require_arity(kind, inputs, 2);
      return elementwise_mul(inputs[0], inputs[1]);
    case OpKind::concat:
      return concat(inputs, attrs.axis);
    case OpKind::tanh:
      require_arity(kind, inputs, 1);
      return tanh(inputs[0]);
    case OpKind::sigmoid:
      require_arity(kind, inputs, 1);
      return sigmoid(inputs[0]);
    case OpKind::softmax:
      require_arity(kind, inputs, 1);
      return softmax(inputs[0]);
    case OpKind::sum:
      require_arity(kind, inputs, 1);
      return sum(inputs[0], attrs.axis);
    case OpKind::l2_norm:
      require_arity(kind, inputs, 1);
      return l2_norm(inputs[0]);
    case OpKind::pick_row:
      require_arity(kind, inputs, 1);
      return pick_row(inputs[0], attrs.index);
    case OpKind::slice_rows:
      require_arity(kind, inputs, 1);
      return slice_rows(inputs[0], attrs.index, attrs.count);
    case OpKind::logloss:
      require_arity(kind, inputs, 1);
      return logloss(inputs[0], attrs.index);
    case OpKind::scale:
      require_arity(kind, inputs, 1);
      return scale(inputs[0], attrs.factor, attrs.shift);
    case OpKind::grad_reverse:
      require_arity(kind, inputs, 1);
      return grad_reverse(inputs[0], attrs.factor);
    case OpKind::markov_window:
      require_arity(kind, inputs, 1);
      return markov_window(inputs[0]);
    case OpKind::leaf:
    case OpKind::custom:
      break;
  }
  throw UsageError(std::string("apply: ") + op_name(kind) + " cannot be applied directly");
}

// ---------------------------------------------------------------------------
// Gradient checking

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double grad_check(const ScalarFn& f, const Tensor& point, double eps) {
  if (!(eps > 0.0)) throw UsageError("grad_check: eps must be positive");
  Tensor x(point.values(), true);

  auto evaluate = [&]() {
    Tape tape;
    Expr y = f(tape, tape.param(static_cast<const Tensor&>(x)));
    if (y.shape() != Shape{1, 1}) throw UsageError("grad_check: function output is not scalar");
    return y.scalar();
  };

  {
    Tape tape;
    Expr y = f(tape, tape.param(x));
    if (y.shape() != Shape{1, 1}) throw UsageError("grad_check: function output is not scalar");
    tape.backward(y);
  }
  const Matrix analytic = x.grad();

  double worst = 0.0;
  for (Index r = 0; r < x.values().rows(); ++r) {
    for (Index c = 0; c < x.values().cols(); ++c) {
      double& coord = x.values()(r, c);
      const double saved = coord;
      coord = saved + eps;
      const double up = evaluate();
      coord = saved - eps;
      const double down = evaluate();
      coord = saved;
      worst = std::max(worst, relative_error(analytic(r, c), (up - down) / (2.0 * eps)));
    }
  }
  return worst;
}

std::vector<GradCheckResult> grad_check_tensors(const std::function<Expr(Tape&)>& loss,
                                                std::span<const std::pair<std::string, Tensor*>> tensors,
                                                double eps, std::size_t max_coords) {
  if (!(eps > 0.0)) throw UsageError("grad_check_tensors: eps must be positive");
  std::vector<bool> had_grad;
  for (const auto& [name, t] : tensors) {
    had_grad.push_back(t->requires_grad());
    t->set_requires_grad(true);
  }

  {
    Tape tape;
    Expr y = loss(tape);
    if (y.shape() != Shape{1, 1}) throw UsageError("grad_check_tensors: loss is not scalar");
    tape.backward(y);
  }
  std::vector<Matrix> analytic;
  for (const auto& [name, t] : tensors) analytic.push_back(t->grad());

  auto evaluate = [&]() {
    Tape tape;
    return loss(tape).scalar();
  };

  std::vector<GradCheckResult> results;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Tensor* t = tensors[k].second;
    const Index total = t->values().size();
    const Index stride =
        (max_coords == 0 || static_cast<Index>(max_coords) >= total) ? 1 : total / static_cast<Index>(max_coords);
    GradCheckResult res{tensors[k].first, 0.0, 0};
    for (Index flat = 0; flat < total; flat += stride) {
      const Index r = flat % t->values().rows();
      const Index c = flat / t->values().rows();
      double& coord = t->values()(r, c);
      const double saved = coord;
      coord = saved + eps;
      const double up = evaluate();
      coord = saved - eps;
      const double down = evaluate();
      coord = saved;
      res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[k](r, c), (up - down) / (2.0 * eps)));
      ++res.coordinates;
    }
    results.push_back(res);
  }

  for (std::size_t k = 0; k < tensors.size(); ++k) tensors[k].second->set_requires_grad(had_grad[k]);
  return results;
}

}  // namespace inflect::ad
