#include "gsina/error.hpp"
#include "gsina/tape.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace gsina;

namespace {

Matrix mat(Index r, Index c, std::initializer_list<double> v) {
  Matrix m(r, c);
  Index k = 0;
  for (double x : v) m(k / c, k % c) = x, ++k;
  return m;
}

// Reduces any output to a scalar with fixed random weights so every output
// coordinate contributes to the checked gradient.
Var weigh(Tape& t, const Var& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(y * t.constant(test::random_matrix(y.rows(), y.cols(), rng)));
}

void check_unary(const std::function<Var(const Var&)>& op, Matrix x, double tol = 1e-5) {
  const auto rep = grad_check([&](Tape& t, const Var& v) { return weigh(t, op(v), 99); }, x, 1e-5, tol);
  CHECK(rep.max_error <= tol);
}

}  // namespace

TEST_CASE("forward values") {
  Tape t;
  const Var a = t.leaf(mat(2, 2, {1, 2, 3, 4}));
  const Var b = t.leaf(mat(2, 2, {5, 6, 7, 8}));
  CHECK(matmul(a, b).value() == mat(2, 2, {19, 22, 43, 50}));
  CHECK(sum(a).item() == 10.0);
  CHECK(sum(a, Axis::Rows).value() == mat(2, 1, {3, 7}));
  CHECK(sum(a, Axis::Cols).value() == mat(1, 2, {4, 6}));
  CHECK(mean(a).item() == 2.5);
  CHECK(max_reduce(a, Axis::Rows).value() == mat(2, 1, {2, 4}));
  const Matrix sm = softmax_rows(a).value();
  CHECK(sm(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  CHECK(log_softmax_rows(a).value()(1, 0) == doctest::Approx(-std::log1p(std::exp(1.0))).epsilon(1e-15));
  CHECK(clamp(a, 1.5, 3.5).value() == mat(2, 2, {1.5, 2, 3, 3.5}));
  CHECK(relu(t.leaf(mat(1, 3, {-1, 0, 2}))).value() == mat(1, 3, {0, 0, 2}));
}

TEST_CASE("segment reductions") {
  Tape t;
  const Var x = t.leaf(mat(4, 2, {1, 2, 3, 4, 5, 6, 7, 8}));
  CHECK(segment_sum(x, {0, 1, 0, 2}, 4).value() == mat(4, 2, {6, 8, 3, 4, 7, 8, 0, 0}));
  CHECK(segment_max(x, {1, 1, 0, 0}, 3).value() == mat(3, 2, {7, 8, 3, 4, 0, 0}));
  CHECK(gather_rows(x, {3, 0, 3}).value() == mat(3, 2, {7, 8, 1, 2, 7, 8}));
  CHECK(broadcast_row(t.leaf(mat(1, 2, {1, 2})), 2).value() == mat(2, 2, {1, 2, 1, 2}));
  CHECK(broadcast_col(t.leaf(mat(2, 1, {1, 2})), 3).value() == mat(2, 3, {1, 1, 1, 2, 2, 2}));
}

TEST_CASE("every primitive's gradient matches central differences") {
  Rng rng(7);
  const Matrix x = test::random_matrix(4, 3, rng);
  const Matrix pos = x.array().abs() + 0.5;
  const Matrix y = test::random_matrix(4, 3, rng);
  const Matrix w = test::random_matrix(3, 2, rng);
  auto c = [&](const Var& v, const Matrix& m) { return v.tape()->constant(m); };

  check_unary([&](const Var& v) { return v + c(v, y); }, x);
  check_unary([&](const Var& v) { return c(v, y) - v; }, x);
  check_unary([&](const Var& v) { return v * c(v, y); }, x);
  check_unary([&](const Var& v) { return c(v, y) / v; }, pos);
  check_unary([&](const Var& v) { return v / c(v, pos); }, x);
  check_unary([&](const Var& v) { return matmul(v, c(v, w)); }, x);
  check_unary([&](const Var& v) { return matmul(c(v, y.transpose()), v); }, x);
  check_unary([](const Var& v) { return exp(v); }, x);
  check_unary([](const Var& v) { return log(v); }, pos);
  check_unary([](const Var& v) { return -v; }, x);
  check_unary([](const Var& v) { return relu(v); }, x);
  check_unary([](const Var& v) { return sqrt(v); }, pos);
  check_unary([](const Var& v) { return v * 2.5; }, x);
  check_unary([](const Var& v) { return v + 2.5; }, x);
  check_unary([](const Var& v) { return sum(v); }, x);
  check_unary([](const Var& v) { return sum(v, Axis::Rows); }, x);
  check_unary([](const Var& v) { return sum(v, Axis::Cols); }, x);
  check_unary([](const Var& v) { return mean(v); }, x);
  check_unary([](const Var& v) { return max_reduce(v); }, x);
  check_unary([](const Var& v) { return max_reduce(v, Axis::Rows); }, x);
  check_unary([](const Var& v) { return max_reduce(v, Axis::Cols); }, x);
  check_unary([](const Var& v) { return softmax_rows(v); }, x);
  check_unary([](const Var& v) { return log_softmax_rows(v); }, x);
  check_unary([](const Var& v) { return gather_rows(v, {2, 0, 2, 3}); }, x);
  check_unary([](const Var& v) { return segment_sum(v, {1, 0, 1, 1}, 3); }, x);
  check_unary([](const Var& v) { return segment_max(v, {1, 0, 1, 1}, 3); }, x);
  check_unary([](const Var& v) { return broadcast_row(sum(v, Axis::Cols), 5); }, x);
  check_unary([](const Var& v) { return broadcast_col(sum(v, Axis::Rows), 2); }, x);
  check_unary([](const Var& v) { return clamp(v, -0.5, 0.5); }, x);
  check_unary(
      [&](const Var& v) {
        const std::vector<Var> parts{v, v * v};
        return concat(parts, Axis::Cols);
      },
      x);
  check_unary(
      [&](const Var& v) {
        const std::vector<Var> parts{v, exp(v)};
        return concat(parts, Axis::Rows);
      },
      x);
}

TEST_CASE("shared subexpressions accumulate") {
  Tape t;
  const Var x = t.leaf(mat(1, 1, {3.0}));
  const Var y = x * x + x;  // dy/dx = 2x + 1
  CHECK(t.backward(y)[x](0, 0) == 7.0);
  const Var z = sum(exp(x) * exp(x));  // d/dx e^{2x} = 2 e^{2x}
  CHECK(t.backward(z)[x](0, 0) == doctest::Approx(2.0 * std::exp(6.0)).epsilon(1e-14));
}

TEST_CASE("gradients of untouched leaves are zero; constants are not differentiated") {
  Tape t;
  const Var a = t.leaf(mat(1, 2, {1, 2}));
  const Var b = t.leaf(mat(1, 2, {3, 4}));
  const Var k = t.constant(mat(1, 2, {5, 6}));
  const Gradients g = t.backward(sum(a * k));
  CHECK(g[a] == mat(1, 2, {5, 6}));
  CHECK(g[b] == Matrix::Zero(1, 2));
  CHECK_FALSE((a * k).tape()->requires_grad(k.id()));
}

TEST_CASE("tape errors") {
  Tape t, other;
  const Var a = t.leaf(mat(1, 2, {1, 2}));
  const Var b = other.leaf(mat(1, 2, {1, 2}));
  auto code = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  CHECK(code([&] { t.backward(a); }) == ErrorCode::NotScalar);
  CHECK(code([&] { (void)a.item(); }) == ErrorCode::NotScalar);
  CHECK(code([&] { (void)(a + b); }) == ErrorCode::DetachedTensor);
  CHECK(code([&] { t.backward(sum(a))[b]; }) == ErrorCode::DetachedTensor);
  CHECK(code([&] { (void)log(t.leaf(mat(1, 1, {-1.0}))); }) == ErrorCode::NonFiniteValue);
  CHECK(code([&] { (void)matmul(a, a); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("ties route max gradient to the first maximal entry") {
  Tape t;
  const Var x = t.leaf(mat(3, 1, {2, 5, 5}));
  const Gradients g = t.backward(max_reduce(x));
  CHECK(g[x] == mat(3, 1, {0, 1, 0}));
}

TEST_CASE("grad_check flags a wrong adjoint") {
  // A deliberately wrong primitive: forward x^2, backward claims x.
  auto bad_square = [](const Var& x) {
    return x.tape()->record(Primitive::Mul, x.value().cwiseProduct(x.value()), {x},
                            [x](const Matrix& g, const Matrix&, GradSink& sink) {
                              sink.add(x, g.cwiseProduct(x.value()));
                            });
  };
  const auto rep = grad_check([&](Tape&, const Var& v) { return sum(bad_square(v)); }, mat(1, 2, {1.0, 3.0}));
  CHECK_FALSE(rep.pass);
  // analytic [1, 3] vs numeric [2, 6]: relative error 0.5 at both, first one reported
  CHECK(rep.max_error == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(rep.worst_index == 0);
}
