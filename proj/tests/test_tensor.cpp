#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "dysat/gradcheck.hpp"
#include "dysat/tape.hpp"
#include "dysat/tensor_io.hpp"

using namespace dysat;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RngEngine& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform_range(rng, -scale, scale);
  return t;
}

}  // namespace

TEST_CASE("tensor basics and shape checks") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  t.at(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST_CASE("tensor binary serialization round-trips bit-exactly") {
  RngEngine rng(42);
  Tensor t = random_tensor({3, 5}, rng, 2.5);
  t[0] = 1e-300;
  t[1] = -0.0;
  std::stringstream ss;
  write_tensor(ss, t);
  const Tensor back = read_tensor<double>(ss);
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double a = back[i], b = t[i];
    CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
  }
}

TEST_CASE("tensor tsv export") {
  Tensor t = Tensor::matrix({{1.5, 2.0}, {3.0, 4.0}});
  std::ostringstream os;
  write_tensor_tsv(os, t);
  CHECK(os.str() == "1.5\t2\n3\t4\n");
}

TEST_CASE("matmul identity and hand arithmetic") {
  Tape tape;
  Var i2 = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var x = tape.constant(Tensor::matrix({{2, 3}, {4, 5}}));
  const Tensor& prod = tape.value(tape.matmul(i2, x));
  CHECK(prod.at(0, 0) == 2.0);
  CHECK(prod.at(1, 1) == 5.0);

  Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = tape.constant(Tensor::matrix({{1}, {1}}));
  const Tensor& c = tape.value(tape.matmul(a, b));
  CHECK(c.at(0, 0) == 3.0);
  CHECK(c.at(1, 0) == 7.0);

  Var bad = tape.constant(Tensor::matrix({{1, 2, 3}}));
  CHECK_THROWS_AS(tape.matmul(bad, bad), DimensionError);
}

TEST_CASE("gradient of sum(A*B) wrt A equals ones * B^T by finite differences") {
  RngEngine rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto build = [](Tape& t, const std::vector<Var>& leaves) {
    return t.sum(t.matmul(leaves[0], leaves[1]));
  };
  auto report = grad_check(build, {{"a", &a}, {"b", &b}}, 1e-6, 1e-6);
  CHECK(report.pass);

  // Analytic cross-check: dL/dA = ones * B^T.
  Tape tape;
  Var va = tape.leaf(a, true);
  Var vb = tape.leaf(b, false);
  Var out = tape.sum(tape.matmul(va, vb));
  tape.backward(out);
  const Tensor& ga = tape.grad(va);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double row_sum = 0.0;
      for (std::size_t k = 0; k < 2; ++k) row_sum += b.at(j, k);
      CHECK(ga.at(i, j) == doctest::Approx(row_sum).epsilon(1e-12));
    }
  }
}

TEST_CASE("masked_softmax values") {
  Tape tape;
  SUBCASE("symmetric logits") {
    Var l = tape.constant(Tensor::vector({0, 0}));
    const Tensor& y = tape.value(tape.masked_softmax(l, Tensor::vector({0, 0})));
    CHECK(y[0] == doctest::Approx(0.5));
    CHECK(y[1] == doctest::Approx(0.5));
  }
  SUBCASE("single survivor") {
    const double ninf = -std::numeric_limits<double>::infinity();
    Var l = tape.constant(Tensor::vector({5, 1}));
    const Tensor& y = tape.value(tape.masked_softmax(l, Tensor::vector({0, ninf})));
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 0.0);  // exactly zero
  }
  SUBCASE("two survivors of three") {
    const double ninf = -std::numeric_limits<double>::infinity();
    Var l = tape.constant(Tensor::vector({1, 2, 3}));
    const Tensor& y = tape.value(tape.masked_softmax(l, Tensor::vector({0, 0, ninf})));
    const double e = std::exp(1.0);
    CHECK(y[0] == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(e / (1.0 + e)).epsilon(1e-12));
    CHECK(y[2] == 0.0);
  }
  SUBCASE("all masked is an error") {
    const double ninf = -std::numeric_limits<double>::infinity();
    Var l = tape.constant(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(tape.masked_softmax(l, Tensor::vector({ninf, ninf})), DegenerateRowError);
  }
  SUBCASE("unmasked entries sum to one within 1e-12 and are nonnegative") {
    RngEngine rng(3);
    const double ninf = -std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 2 + uniform_index(rng, 6);
      Tensor mask({n});
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        const bool keep = uniform_real(rng) < 0.6;
        mask[i] = keep ? 0.0 : ninf;
        any = any || keep;
      }
      if (!any) mask[0] = 0.0;
      Var l = tape.constant(random_tensor({n}, rng, 4.0));
      const Tensor& y = tape.value(tape.masked_softmax(l, mask));
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(y[i] >= 0.0);
        if (mask[i] != 0.0) CHECK(y[i] == 0.0);
        total += y[i];
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("activation fixed points and saturation") {
  Tape tape;
  Var x = tape.constant(Tensor::vector({-1.0, 0.0, 2.0}));
  const Tensor& lr = tape.value(tape.leaky_relu(x, 0.2));
  CHECK(lr[0] == doctest::Approx(-0.2));
  CHECK(lr[1] == 0.0);
  CHECK(lr[2] == 2.0);

  const Tensor& el = tape.value(tape.elu(x));
  CHECK(el[1] == 0.0);
  CHECK(el[0] == doctest::Approx(std::exp(-1.0) - 1.0));

  Var big = tape.constant(Tensor::vector({0.0, 800.0, -800.0}));
  const Tensor& sg = tape.value(tape.sigmoid(big));
  CHECK(sg[0] == 0.5);
  CHECK(sg[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::isfinite(sg[2]));
  CHECK(sg[2] >= 0.0);
}

TEST_CASE("every primitive's backward matches central differences") {
  RngEngine rng(11);
  const double h = 1e-6, tol = 1e-6;

  SUBCASE("elementwise chain, probes displaced from kinks") {
    Tensor x({6});
    for (std::size_t i = 0; i < x.size(); ++i) {
      double v = uniform_range(rng, -2.0, 2.0);
      if (std::abs(v) < 1e-3) v = v < 0 ? v - 0.5 : v + 0.5;
      x[i] = v;
    }
    auto build = [](Tape& t, const std::vector<Var>& l) {
      Var a = t.leaky_relu(l[0], 0.2);
      Var b = t.elu(a);
      Var c = t.sigmoid(b);
      Var d = t.softplus_clamped(c, 30.0);
      return t.sum(d);
    };
    CHECK(grad_check(build, {{"x", &x}}, h, tol).pass);
  }

  SUBCASE("matvec, slice, row_dot, gather, concat") {
    Tensor m = random_tensor({4, 3}, rng);
    Tensor v = random_tensor({6}, rng);
    Tensor r = random_tensor({5, 3}, rng);
    auto build = [](Tape& t, const std::vector<Var>& l) {
      Var head = t.slice1d(l[1], 0, 3);
      Var tail = t.slice1d(l[1], 3, 3);
      Var mv = t.matvec(l[0], head);   // [4]
      Var mv2 = t.matvec(l[0], tail);  // [4]
      Var g = t.gather_rows(l[2], {0, 2, 2, 4});             // [4 x 3]
      Var g2 = t.gather_rows(l[2], {1, 1, 3, 0});            // [4 x 3]
      Var rd = t.row_dot(g, g2);                             // [4]
      Var cat = t.concat_cols({g, g2});                      // [4 x 6]
      Var s = t.add(t.add(mv, mv2), rd);
      return t.add(t.sum(s), t.sum(cat));
    };
    CHECK(grad_check(build, {{"m", &m}, {"v", &v}, {"r", &r}}, h, tol).pass);
  }

  SUBCASE("masked softmax through a weighted readout") {
    Tensor logits = random_tensor({5}, rng, 2.0);
    Tensor coef = random_tensor({5}, rng, 1.0);
    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor mask = Tensor::vector({0, 0, ninf, 0, 0});
    auto build = [&mask, &coef](Tape& t, const std::vector<Var>& l) {
      Var y = t.masked_softmax(l[0], mask);
      return t.sum(t.mul(y, t.constant(coef)));
    };
    CHECK(grad_check(build, {{"logits", &logits}}, h, tol).pass);
  }

  SUBCASE("mul, scale, broadcast bias") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor bias = random_tensor({4}, rng);
    auto build = [](Tape& t, const std::vector<Var>& l) {
      Var prod = t.mul(l[0], l[1]);
      Var shifted = t.add_row_broadcast(prod, l[2]);
      return t.sum(t.scale(shifted, 0.7));
    };
    CHECK(grad_check(build, {{"a", &a}, {"b", &b}, {"bias", &bias}}, h, tol).pass);
  }
}

TEST_CASE("grad_check of sum(sigmoid(Wx)) and constants") {
  RngEngine rng(5);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor x = random_tensor({3, 2}, rng);
  auto build = [](Tape& t, const std::vector<Var>& l) {
    return t.sum(t.sigmoid(t.matmul(l[0], l[1])));
  };
  auto report = grad_check(build, {{"w", &w}, {"x", &x}}, 1e-6, 1e-5);
  CHECK(report.pass);
  CHECK(report.max_rel_err <= 1e-5);

  // Constant objective: analytic gradient must be exactly zero.
  Tensor p = random_tensor({3}, rng);
  Tape tape;
  Var leaf = tape.leaf(p, true);
  Var c = tape.constant(Tensor::scalar(2.5));
  Var out = tape.add(tape.sum(tape.scale(leaf, 0.0)), c);
  tape.backward(out);
  for (std::size_t i = 0; i < 3; ++i) CHECK(tape.grad(leaf)[i] == 0.0);
}

TEST_CASE("gradient accumulation is additive across paths") {
  Tensor p = Tensor::vector({1.5, -2.0});
  Tape tape;
  Var leaf = tape.leaf(p, true);
  // L = sum(p) + sum(p) -> dL/dp = 2 everywhere.
  Var out = tape.add(tape.sum(leaf), tape.sum(leaf));
  tape.backward(out);
  CHECK(tape.grad(leaf)[0] == 2.0);
  CHECK(tape.grad(leaf)[1] == 2.0);
}
