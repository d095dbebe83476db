#include "gsina/tape.hpp"

#include "gsina/error.hpp"

#include <cmath>
#include <limits>

namespace gsina {

std::string_view to_string(Primitive p) {
  switch (p) {
    case Primitive::Leaf: return "leaf";
    case Primitive::Constant: return "constant";
    case Primitive::Add: return "add";
    case Primitive::Sub: return "sub";
    case Primitive::Mul: return "mul";
    case Primitive::Div: return "div";
    case Primitive::Matmul: return "matmul";
    case Primitive::Exp: return "exp";
    case Primitive::Log: return "log";
    case Primitive::Neg: return "neg";
    case Primitive::Relu: return "relu";
    case Primitive::Sqrt: return "sqrt";
    case Primitive::Scale: return "scale";
    case Primitive::AddScalar: return "add-scalar";
    case Primitive::Sum: return "sum";
    case Primitive::Mean: return "mean";
    case Primitive::MaxReduce: return "max-reduce";
    case Primitive::SoftmaxRows: return "softmax-rows";
    case Primitive::LogSoftmaxRows: return "log-softmax-rows";
    case Primitive::Concat: return "concat";
    case Primitive::GatherRows: return "gather-rows";
    case Primitive::SegmentSum: return "segment-sum";
    case Primitive::SegmentMax: return "segment-max";
    case Primitive::BroadcastRow: return "broadcast-row";
    case Primitive::BroadcastCol: return "broadcast-col";
    case Primitive::Clamp: return "clamp";
  }
  return "?";
}

const Matrix& Var::value() const {
  if (!tape_) throw Error(ErrorCode::DetachedTensor, "empty Var");
  return tape_->value(id_);
}

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw Error(ErrorCode::NotScalar, "item() on " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Matrix Gradients::operator[](const Var& v) const {
  if (!v.valid() || v.tape() != tape_) throw Error(ErrorCode::DetachedTensor, "gradient lookup on foreign Var");
  if (v.id() < grads_.size() && grads_[v.id()].size() != 0) return grads_[v.id()];
  return Matrix::Zero(v.rows(), v.cols());
}

void GradSink::add(const Var& v, const Matrix& g) {
  if (!v.requires_grad()) return;
  Matrix& slot = grads_.grads_[v.id()];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

Var Tape::leaf(Matrix value) { return record(Primitive::Leaf, std::move(value), {}, nullptr); }

Var Tape::constant(Matrix value) { return record(Primitive::Constant, std::move(value), {}, nullptr); }

Var Tape::record(Primitive kind, Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(kind, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Primitive kind, Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.allFinite()) throw Error(ErrorCode::NonFiniteValue, std::string(to_string(kind)) + " produced NaN/Inf");
  bool needs = kind == Primitive::Leaf;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw Error(ErrorCode::DetachedTensor, std::string(to_string(kind)) + " input from another tape");
    needs = needs || requires_grad(in.id());
  }
  nodes_.push_back(Node{kind, std::move(value), needs, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) const {
  if (!loss.valid() || loss.tape() != this) throw Error(ErrorCode::DetachedTensor, "loss not recorded on this tape");
  if (loss.value().size() != 1) throw Error(ErrorCode::NotScalar, "loss must be 1x1");
  Gradients grads;
  grads.tape_ = this;
  grads.grads_.resize(loss.id() + 1);
  grads.grads_[loss.id()] = Matrix::Ones(1, 1);
  GradSink sink(grads);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.backward || grads.grads_[id].size() == 0) continue;
    // Copy: the callback may write into other slots of the same vector.
    const Matrix g = grads.grads_[id];
    node.backward(g, node.value, sink);
  }
  return grads;
}

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw Error(ErrorCode::DetachedTensor, "empty Var");
  return *a.tape();
}

std::string shape_str(const Var& a) { return std::to_string(a.rows()) + "x" + std::to_string(a.cols()); }

void require_same_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw Error(ErrorCode::DetachedTensor, "empty Var");
  if (a.tape() != b.tape()) throw Error(ErrorCode::DetachedTensor, "operands on different tapes");
}

void require_same_shape(const Var& a, const Var& b, std::string_view op) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
  }
}

void check_segments(const std::vector<Index>& seg, Index rows, Index num_segments) {
  if (static_cast<Index>(seg.size()) != rows) throw Error(ErrorCode::ShapeMismatch, "segment map length");
  for (Index s : seg) {
    if (s < 0 || s >= num_segments) throw Error(ErrorCode::IndexOutOfRange, "segment id " + std::to_string(s));
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return tape_of(a).record(Primitive::Add, a.value() + b.value(), {a, b},
                           [a, b](const Matrix& g, const Matrix&, GradSink& s) {
                             s.add(a, g);
                             s.add(b, g);
                           });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return tape_of(a).record(Primitive::Sub, a.value() - b.value(), {a, b},
                           [a, b](const Matrix& g, const Matrix&, GradSink& s) {
                             s.add(a, g);
                             if (b.requires_grad()) s.add(b, -g);
                           });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return tape_of(a).record(Primitive::Mul, a.value().cwiseProduct(b.value()), {a, b},
                           [a, b](const Matrix& g, const Matrix&, GradSink& s) {
                             if (a.requires_grad()) s.add(a, g.cwiseProduct(b.value()));
                             if (b.requires_grad()) s.add(b, g.cwiseProduct(a.value()));
                           });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  return tape_of(a).record(Primitive::Div, a.value().cwiseQuotient(b.value()), {a, b},
                           [a, b](const Matrix& g, const Matrix& out, GradSink& s) {
                             const Matrix gb = g.cwiseQuotient(b.value());
                             if (a.requires_grad()) s.add(a, gb);
                             if (b.requires_grad()) s.add(b, -gb.cwiseProduct(out));
                           });
}

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw Error(ErrorCode::ShapeMismatch, "matmul: " + shape_str(a) + " * " + shape_str(b));
  return tape_of(a).record(Primitive::Matmul, a.value() * b.value(), {a, b},
                           [a, b](const Matrix& g, const Matrix&, GradSink& s) {
                             if (a.requires_grad()) s.add(a, g * b.value().transpose());
                             if (b.requires_grad()) s.add(b, a.value().transpose() * g);
                           });
}

Var exp(const Var& a) {
  return tape_of(a).record(Primitive::Exp, a.value().array().exp().matrix(), {a},
                           [a](const Matrix& g, const Matrix& out, GradSink& s) { s.add(a, g.cwiseProduct(out)); });
}

Var log(const Var& a) {
  return tape_of(a).record(Primitive::Log, a.value().array().log().matrix(), {a},
                           [a](const Matrix& g, const Matrix&, GradSink& s) { s.add(a, g.cwiseQuotient(a.value())); });
}

Var neg(const Var& a) {
  return tape_of(a).record(Primitive::Neg, -a.value(), {a},
                           [a](const Matrix& g, const Matrix&, GradSink& s) { s.add(a, -g); });
}

// relu(x) = max(x, 0) with x as the first argument, so the kink at 0 passes gradient 1.
Var relu(const Var& a) {
  return tape_of(a).record(Primitive::Relu, a.value().cwiseMax(0.0), {a},
                           [a](const Matrix& g, const Matrix&, GradSink& s) {
                             s.add(a, (a.value().array() >= 0.0).select(g, 0.0).matrix());
                           });
}

Var sqrt(const Var& a) {
  return tape_of(a).record(Primitive::Sqrt, a.value().array().sqrt().matrix(), {a},
                           [a](const Matrix& g, const Matrix& out, GradSink& s) {
                             s.add(a, (0.5 * g.array() / out.array()).matrix());
                           });
}

Var scale(const Var& a, double c) {
  return tape_of(a).record(Primitive::Scale, a.value() * c, {a},
                           [a, c](const Matrix& g, const Matrix&, GradSink& s) { s.add(a, g * c); });
}

Var add_scalar(const Var& a, double c) {
  return tape_of(a).record(Primitive::AddScalar, (a.value().array() + c).matrix(), {a},
                           [a](const Matrix& g, const Matrix&, GradSink& s) { s.add(a, g); });
}

Var sum(const Var& a, Axis axis) {
  const Matrix& x = a.value();
  Matrix out;
  switch (axis) {
    case Axis::All: out = Matrix::Constant(1, 1, x.sum()); break;
    case Axis::Rows: out = x.rowwise().sum(); break;
    case Axis::Cols: out = x.colwise().sum(); break;
  }
  return tape_of(a).record(Primitive::Sum, std::move(out), {a}, [a, axis](const Matrix& g, const Matrix&, GradSink& s) {
    const Index r = a.rows(), c = a.cols();
    switch (axis) {
      case Axis::All: s.add(a, Matrix::Constant(r, c, g(0, 0))); break;
      case Axis::Rows: s.add(a, g.replicate(1, c)); break;
      case Axis::Cols: s.add(a, g.replicate(r, 1)); break;
    }
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "mean of empty tensor");
  return tape_of(a).record(Primitive::Mean, Matrix::Constant(1, 1, a.value().sum() / n), {a},
                           [a, n](const Matrix& g, const Matrix&, GradSink& s) {
                             s.add(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
                           });
}

// Ties resolve to the first index in row-major order (All), per row (Rows), or per column (Cols).
Var max_reduce(const Var& a, Axis axis) {
  const Matrix& x = a.value();
  if (x.size() == 0) throw Error(ErrorCode::ShapeMismatch, "max of empty tensor");
  std::vector<std::pair<Index, Index>> arg;
  Matrix out;
  auto first_max = [&](Index r0, Index r1, Index c0, Index c1) {
    Index br = r0, bc = c0;
    for (Index i = r0; i < r1; ++i)
      for (Index j = c0; j < c1; ++j)
        if (x(i, j) > x(br, bc)) br = i, bc = j;
    return std::pair{br, bc};
  };
  switch (axis) {
    case Axis::All:
      arg.push_back(first_max(0, x.rows(), 0, x.cols()));
      out = Matrix::Constant(1, 1, x(arg[0].first, arg[0].second));
      break;
    case Axis::Rows:
      out.resize(x.rows(), 1);
      for (Index i = 0; i < x.rows(); ++i) {
        arg.push_back(first_max(i, i + 1, 0, x.cols()));
        out(i, 0) = x(arg.back().first, arg.back().second);
      }
      break;
    case Axis::Cols:
      out.resize(1, x.cols());
      for (Index j = 0; j < x.cols(); ++j) {
        arg.push_back(first_max(0, x.rows(), j, j + 1));
        out(0, j) = x(arg.back().first, arg.back().second);
      }
      break;
  }
  return tape_of(a).record(Primitive::MaxReduce, std::move(out), {a},
                           [a, arg = std::move(arg)](const Matrix& g, const Matrix&, GradSink& s) {
                             Matrix ga = Matrix::Zero(a.rows(), a.cols());
                             const Matrix flat = g.reshaped<Eigen::RowMajor>(static_cast<Index>(arg.size()), 1);
                             for (std::size_t k = 0; k < arg.size(); ++k) ga(arg[k].first, arg[k].second) += flat(static_cast<Index>(k), 0);
                             s.add(a, ga);
                           });
}

Var softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix out = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return tape_of(a).record(Primitive::SoftmaxRows, std::move(out), {a}, [a](const Matrix& g, const Matrix& y, GradSink& s) {
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    s.add(a, (y.array() * (g.colwise() - dot).array()).matrix());
  });
}

Var log_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  const Eigen::VectorXd mx = x.rowwise().maxCoeff();
  const Matrix shifted = x.colwise() - mx;
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  Matrix out = shifted.colwise() - lse;
  return tape_of(a).record(Primitive::LogSoftmaxRows, std::move(out), {a},
                           [a](const Matrix& g, const Matrix& y, GradSink& s) {
                             const Eigen::VectorXd gsum = g.rowwise().sum();
                             Matrix soft = y.array().exp().matrix();
                             s.add(a, g - Matrix(soft.array().colwise() * gsum.array()));
                           });
}

Var concat(std::span<const Var> parts, Axis axis) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  if (axis == Axis::All) throw Error(ErrorCode::ShapeMismatch, "concat needs Rows or Cols axis");
  Index rows = 0, cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (axis == Axis::Cols) {
      // Side by side: equal row counts.
      if (p.rows() != parts[0].rows()) throw Error(ErrorCode::ShapeMismatch, "concat cols: row mismatch");
      rows = p.rows();
      cols += p.cols();
    } else {
      if (p.cols() != parts[0].cols()) throw Error(ErrorCode::ShapeMismatch, "concat rows: col mismatch");
      cols = p.cols();
      rows += p.rows();
    }
  }
  Matrix out(rows, cols);
  Index off = 0;
  for (const Var& p : parts) {
    if (axis == Axis::Cols) {
      out.middleCols(off, p.cols()) = p.value();
      off += p.cols();
    } else {
      out.middleRows(off, p.rows()) = p.value();
      off += p.rows();
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts[0]).record(Primitive::Concat, std::move(out), parts,
                                  [inputs, axis](const Matrix& g, const Matrix&, GradSink& s) {
                                    Index o = 0;
                                    for (const Var& p : inputs) {
                                      if (axis == Axis::Cols) {
                                        if (p.requires_grad()) s.add(p, g.middleCols(o, p.cols()));
                                        o += p.cols();
                                      } else {
                                        if (p.requires_grad()) s.add(p, g.middleRows(o, p.rows()));
                                        o += p.rows();
                                      }
                                    }
                                  });
}

Var gather_rows(const Var& a, const std::vector<Index>& rows) {
  const Matrix& x = a.value();
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= x.rows()) throw Error(ErrorCode::IndexOutOfRange, "gather row " + std::to_string(rows[k]));
    out.row(static_cast<Index>(k)) = x.row(rows[k]);
  }
  return tape_of(a).record(Primitive::GatherRows, std::move(out), {a}, [a, rows](const Matrix& g, const Matrix&, GradSink& s) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) ga.row(rows[k]) += g.row(static_cast<Index>(k));
    s.add(a, ga);
  });
}

Var segment_sum(const Var& a, const std::vector<Index>& seg, Index num_segments) {
  const Matrix& x = a.value();
  check_segments(seg, x.rows(), num_segments);
  Matrix out = Matrix::Zero(num_segments, x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(seg[i]) += x.row(i);
  return tape_of(a).record(Primitive::SegmentSum, std::move(out), {a}, [a, seg](const Matrix& g, const Matrix&, GradSink& s) {
    Matrix ga(a.rows(), a.cols());
    for (Index i = 0; i < a.rows(); ++i) ga.row(i) = g.row(seg[i]);
    s.add(a, ga);
  });
}

Var segment_max(const Var& a, const std::vector<Index>& seg, Index num_segments) {
  const Matrix& x = a.value();
  check_segments(seg, x.rows(), num_segments);
  // argmax[s * cols + j] = source row, or -1 for an empty segment.
  std::vector<Index> argmax(static_cast<std::size_t>(num_segments * x.cols()), -1);
  Matrix out = Matrix::Zero(num_segments, x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      Index& best = argmax[static_cast<std::size_t>(seg[i] * x.cols() + j)];
      if (best < 0 || x(i, j) > x(best, j)) {
        best = i;
        out(seg[i], j) = x(i, j);
      }
    }
  }
  return tape_of(a).record(Primitive::SegmentMax, std::move(out), {a},
                           [a, argmax = std::move(argmax)](const Matrix& g, const Matrix&, GradSink& s) {
                             Matrix ga = Matrix::Zero(a.rows(), a.cols());
                             const Index c = a.cols();
                             for (std::size_t k = 0; k < argmax.size(); ++k) {
                               if (argmax[k] >= 0) ga(argmax[k], static_cast<Index>(k) % c) += g(static_cast<Index>(k) / c, static_cast<Index>(k) % c);
                             }
                             s.add(a, ga);
                           });
}

Var broadcast_row(const Var& row, Index rows) {
  if (row.rows() != 1) throw Error(ErrorCode::ShapeMismatch, "broadcast_row expects 1 x c, got " + shape_str(row));
  return tape_of(row).record(Primitive::BroadcastRow, row.value().replicate(rows, 1), {row},
                             [row](const Matrix& g, const Matrix&, GradSink& s) { s.add(row, g.colwise().sum()); });
}

Var broadcast_col(const Var& col, Index cols) {
  if (col.cols() != 1) throw Error(ErrorCode::ShapeMismatch, "broadcast_col expects r x 1, got " + shape_str(col));
  return tape_of(col).record(Primitive::BroadcastCol, col.value().replicate(1, cols), {col},
                             [col](const Matrix& g, const Matrix&, GradSink& s) { s.add(col, g.rowwise().sum()); });
}

Var clamp(const Var& a, double lo, double hi) {
  return tape_of(a).record(Primitive::Clamp, a.value().cwiseMax(lo).cwiseMin(hi), {a},
                           [a, lo, hi](const Matrix& g, const Matrix&, GradSink& s) {
                             const auto& x = a.value().array();
                             s.add(a, ((x >= lo) && (x <= hi)).select(g, 0.0).matrix());
                           });
}

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Matrix>& inputs, double h, double tol) {
  GradCheckReport report;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& x : inputs) vars.push_back(tape.leaf(x));
    const Var loss = f(tape, vars);
    const Gradients grads = tape.backward(loss);
    for (const Var& v : vars) report.analytic.push_back(grads[v]);
  }
  auto evaluate = [&](const std::vector<Matrix>& xs) {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& x : xs) vars.push_back(tape.constant(x));
    return f(tape, vars).item();
  };
  std::vector<Matrix> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix numeric(inputs[k].rows(), inputs[k].cols());
    for (Index i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k].data()[i];
      probe[k].data()[i] = x0 + h;
      const double fp = evaluate(probe);
      probe[k].data()[i] = x0 - h;
      const double fm = evaluate(probe);
      probe[k].data()[i] = x0;
      numeric.data()[i] = (fp - fm) / (2.0 * h);
      const double err = std::abs(report.analytic[k].data()[i] - numeric.data()[i]) / std::max(1.0, std::abs(numeric.data()[i]));
      if (err > report.max_error) {
        report.max_error = err;
        report.worst_input = k;
        report.worst_index = i;
      }
    }
    report.numeric.push_back(std::move(numeric));
  }
  report.pass = report.max_error <= tol;
  return report;
}

GradCheckReport grad_check(const std::function<Var(Tape&, const Var&)>& f, const Matrix& x, double h, double tol) {
  return grad_check([&f](Tape& t, std::span<const Var> v) { return f(t, v[0]); }, std::vector<Matrix>{x}, h, tol);
}

}  // namespace gsina
