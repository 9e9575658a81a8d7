#include <doctest.h>

#include <functional>
#include <random>

#include "graphclip/autodiff.hpp"

using namespace graphclip;
using graphclip::ad::Tape;
using graphclip::ad::Var;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (auto& x : m.values()) x = nd(rng);
  return m;
}

using Build = std::function<Var(Tape&, const std::vector<Var>&)>;

double contract(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks d⟨seed, f(inputs)⟩ against central differences for every input.
double worst_error(const Build& f, std::vector<Matrix> inputs, std::uint64_t seed_rng) {
  std::mt19937_64 rng(seed_rng);
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
  const Var out = f(tape, leaves);
  const Matrix seed = random_matrix(tape.value(out).rows(), tape.value(out).cols(), rng);
  tape.backward(out, seed);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = tape.grad(leaves[k]);
    for (std::size_t e = 0; e < inputs[k].size(); ++e) {
      auto eval = [&](double delta) {
        auto shifted = inputs;
        shifted[k][e] += delta;
        Tape t2;
        std::vector<Var> l2;
        for (const auto& m : shifted) l2.push_back(t2.leaf(m));
        return contract(t2.value(f(t2, l2)), seed);
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      worst = std::max(worst, std::abs(numeric - analytic[e]) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("every tape operation matches central differences") {
  std::mt19937_64 rng(11);
  auto m = [&](std::size_t r, std::size_t c) { return random_matrix(r, c, rng); };
  const double tol = 1e-7;

  CHECK(worst_error([](Tape& t, const auto& v) { return t.matmul(v[0], v[1]); }, {m(3, 4), m(4, 2)}, 1) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.matmul_nt(v[0], v[1]); }, {m(3, 4), m(5, 4)}, 2) < tol);
  const Matrix adj = m(3, 3);
  CHECK(worst_error([&](Tape& t, const auto& v) { return t.matmul_const_left(adj, v[0]); }, {m(3, 2)}, 3) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.add(v[0], v[1]); }, {m(2, 3), m(2, 3)}, 4) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.add_row(v[0], v[1]); }, {m(4, 3), m(1, 3)}, 5) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.scale(v[0], -2.5); }, {m(2, 2)}, 6) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.gelu(v[0]); }, {m(3, 5)}, 7) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.layer_norm(v[0], v[1], v[2]); }, {m(3, 6), m(1, 6), m(1, 6)},
                    8) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.softmax_rows(v[0]); }, {m(3, 4)}, 9) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.slice_cols(v[0], 1, 2); }, {m(3, 4)}, 10) < tol);
  CHECK(worst_error(
            [](Tape& t, const auto& v) {
              std::vector<Var> parts{v[0], v[1]};
              return t.concat_cols(parts);
            },
            {m(2, 3), m(2, 1)}, 11) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.mean_rows(v[0]); }, {m(5, 3)}, 12) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.l2_normalize_rows(v[0]); }, {m(3, 4)}, 13) < tol);
  CHECK(worst_error([](Tape& t, const auto& v) { return t.sum_all(v[0]); }, {m(3, 4)}, 14) < tol);
  // A composite graph that reuses a node along two paths.
  CHECK(worst_error(
            [](Tape& t, const auto& v) {
              const Var a = t.gelu(t.matmul(v[0], v[1]));
              return t.add(a, t.softmax_rows(a));
            },
            {m(3, 4), m(4, 4)}, 15) < tol);
}

TEST_CASE("constants and frozen leaves receive no gradient") {
  Tape t;
  const Var c = t.constant(Matrix{{1.0, 2.0}});
  const Var frozen = t.leaf(Matrix{{3.0, 4.0}}, false);
  const Var x = t.leaf(Matrix{{5.0, 6.0}});
  const Var y = t.sum_all(t.add(t.add(c, frozen), x));
  t.backward(y);
  CHECK_FALSE(t.requires_grad(c));
  CHECK_FALSE(t.requires_grad(frozen));
  CHECK(t.grad(frozen) == Matrix(1, 2));
  CHECK(t.grad(x) == Matrix{{1.0, 1.0}});
}

TEST_CASE("param leaves reference external storage") {
  Matrix w{{2.0}};
  Tape t;
  const Var p = t.param(w);
  const Var y = t.sum_all(t.scale(p, 3.0));
  CHECK(&t.value(p) == &w);
  t.backward(y);
  CHECK(t.grad(p)(0, 0) == 3.0);
}

TEST_CASE("backward validates the seed shape") {
  Tape t;
  const Var x = t.leaf(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(x, 1.0), ShapeError);
  CHECK_THROWS_AS(t.backward(x, Matrix(1, 2)), ShapeError);
  CHECK_THROWS_AS(t.matmul(x, t.leaf(Matrix(3, 1))), ShapeError);
}
