#ifndef GSINA_TAPE_HPP
#define GSINA_TAPE_HPP

#include "gsina/graph.hpp"

#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace gsina {

enum class Primitive {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Matmul,
  Exp,
  Log,
  Neg,
  Relu,
  Sqrt,
  Scale,
  AddScalar,
  Sum,
  Mean,
  MaxReduce,
  SoftmaxRows,
  LogSoftmaxRows,
  Concat,
  GatherRows,
  SegmentSum,
  SegmentMax,
  BroadcastRow,
  BroadcastCol,
  Clamp,
};

std::string_view to_string(Primitive p);

/// Reduction axis. `Rows` reduces within each row (r x c -> r x 1); `Cols`
/// reduces within each column (r x c -> 1 x c).
enum class Axis { All, Rows, Cols };

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class GradSink;
/// Adjoint callback: receives the upstream gradient and the node's own forward value.
using BackwardFn = std::function<void(const Matrix& grad_out, const Matrix& out, GradSink& sink)>;

/// Dense gradients produced by `Tape::backward`.
class Gradients {
 public:
  /// Gradient of the loss with respect to `v`; zeros when `v` did not influence it.
  Matrix operator[](const Var& v) const;

 private:
  friend class Tape;
  friend class GradSink;
  const Tape* tape_ = nullptr;
  std::vector<Matrix> grads_;
};

class GradSink {
 public:
  void add(const Var& v, const Matrix& g);

 private:
  friend class Tape;
  explicit GradSink(Gradients& grads) : grads_(grads) {}
  Gradients& grads_;
};

/// Reverse-mode record of primitive applications. Nodes are appended in
/// evaluation order, which is already topological.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value);
  Var constant(Matrix value);

  /// Appends a primitive result. Throws NonFiniteValue if `value` has NaN/Inf.
  Var record(Primitive kind, Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Primitive kind, Matrix value, std::span<const Var> inputs, BackwardFn backward);

  /// Throws NotScalar unless `loss` is 1x1; DetachedTensor if it belongs elsewhere.
  Gradients backward(const Var& loss) const;

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  Primitive kind(std::size_t id) const { return nodes_[id].kind; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Primitive kind;
    Matrix value;
    bool requires_grad;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

// Primitives. All shapes are 2-D; vectors are n x 1 columns unless stated.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var exp(const Var& a);
Var log(const Var& a);
Var neg(const Var& a);
Var relu(const Var& a);
Var sqrt(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var sum(const Var& a, Axis axis = Axis::All);
Var mean(const Var& a);
Var max_reduce(const Var& a, Axis axis = Axis::All);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var concat(std::span<const Var> parts, Axis axis);
Var gather_rows(const Var& a, const std::vector<Index>& rows);
Var segment_sum(const Var& a, const std::vector<Index>& segment_of_row, Index num_segments);
/// Empty segments produce zero rows.
Var segment_max(const Var& a, const std::vector<Index>& segment_of_row, Index num_segments);
Var broadcast_row(const Var& row, Index rows);
Var broadcast_col(const Var& col, Index cols);
Var clamp(const Var& a, double lo, double hi);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator+(const Var& a, double c) { return add_scalar(a, c); }

struct GradCheckReport {
  double max_error = 0.0;       // max |analytic - numeric| / max(1, |numeric|)
  std::size_t worst_input = 0;
  Index worst_index = 0;
  bool pass = false;
  std::vector<Matrix> analytic;
  std::vector<Matrix> numeric;
};

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares tape gradients of `f` against central differences with step `h`
/// over every coordinate of every input.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Matrix>& inputs, double h = 1e-5, double tol = 1e-4);
GradCheckReport grad_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& x, double h = 1e-5,
                           double tol = 1e-4);

}  // namespace gsina

#endif  // GSINA_TAPE_HPP
