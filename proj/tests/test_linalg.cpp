#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "lowshot/linalg.hpp"
#include "test_support.hpp"

using namespace lowshot;
using testsupport::naive_matmul;

TEST_CASE("matrix storage and row access") {
  Matrix m(2, 3);
  REQUIRE(m.rows == 2);
  REQUIRE(m.cols == 3);
  REQUIRE(m.data.size() == 6);
  for (double v : m.data) REQUIRE(v == 0.0);

  m(0, 0) = 1.0;
  m(1, 2) = 5.0;
  REQUIRE(m.data[0] == 1.0);
  REQUIRE(m.data[5] == 5.0);

  const Vector r1 = m.row_vector(1);
  REQUIRE(r1 == Vector{0.0, 0.0, 5.0});
  m.set_row(0, Vector{7.0, 8.0, 9.0});
  REQUIRE(m(0, 1) == 8.0);

  const Matrix eye = Matrix::identity(3);
  REQUIRE(eye(0, 0) == 1.0);
  REQUIRE(eye(0, 1) == 0.0);
  REQUIRE(eye(2, 2) == 1.0);
}

TEST_CASE("dot and norms") {
  REQUIRE(dot(Vector{1, 2, 3}, Vector{4, 5, 6}) == 32.0);
  REQUIRE(squared_norm(Vector{3, 4}) == 25.0);
  REQUIRE(l2_norm(Vector{3, 4}) == 5.0);
  REQUIRE(squared_norm(Vector{}) == 0.0);
  REQUIRE_THROWS_AS(dot(Vector{1}, Vector{1, 2}), shape_error);
}

TEST_CASE("matmul matches the naive reference") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.index(6);
    const std::size_t m = 1 + rng.index(6);
    const std::size_t p = 1 + rng.index(6);
    Matrix a(n, m), b(m, p);
    for (double& v : a.data) v = rng.uniform(-3.0, 3.0);
    for (double& v : b.data) v = rng.uniform(-3.0, 3.0);
    if (trial % 3 == 0) a(0, 0) = 0.0;  // exercise the zero-skip path
    const Matrix got = matmul(a, b);
    const Matrix want = naive_matmul(a, b);
    REQUIRE(got.rows == want.rows);
    REQUIRE(got.cols == want.cols);
    for (std::size_t i = 0; i < got.data.size(); ++i)
      REQUIRE(got.data[i] == Catch::Approx(want.data[i]).margin(1e-12));
  }
  REQUIRE_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), shape_error);

  const Matrix a(3, 4, 1.5);
  REQUIRE(matmul(a, Matrix::identity(4)) == a);
}

TEST_CASE("matvec") {
  Matrix m(2, 2);
  m(0, 0) = 1.0;
  m(0, 1) = 2.0;
  m(1, 0) = 3.0;
  m(1, 1) = 4.0;
  REQUIRE(matvec(m, Vector{1.0, 1.0}) == Vector{3.0, 7.0});
  REQUIRE_THROWS_AS(matvec(m, Vector{1.0}), shape_error);
}

TEST_CASE("softmax normalizes and is shift invariant") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(16);
    Vector z(n);
    const double scale = trial % 4 == 0 ? 1e3 : 10.0;
    for (double& v : z) v = rng.uniform(-scale, scale);

    const Vector p = stable_softmax(z);
    double sum = 0.0;
    for (double v : p) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    REQUIRE(std::abs(sum - 1.0) < 1e-12);

    const double shift = rng.uniform(-1e3, 1e3);
    Vector zs = z;
    for (double& v : zs) v += shift;
    const Vector ps = stable_softmax(zs);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(p[i] - ps[i]) < 1e-12);
  }
}

TEST_CASE("softmax handles extreme logits and rejects empty input") {
  const Vector p = stable_softmax(Vector{1000.0, 0.0, -1000.0});
  REQUIRE(p[0] == Catch::Approx(1.0));
  REQUIRE(std::isfinite(p[2]));
  REQUIRE_THROWS_AS(stable_softmax(Vector{}), shape_error);

  // equal logits split mass evenly
  const Vector q = stable_softmax(Vector{3.0, 3.0, 3.0, 3.0});
  for (double v : q) REQUIRE(v == Catch::Approx(0.25));
}

TEST_CASE("log_sum_exp") {
  const Vector v{0.1, -0.4, 1.7};
  double naive = 0.0;
  for (double x : v) naive += std::exp(x);
  REQUIRE(log_sum_exp(v) == Catch::Approx(std::log(naive)).epsilon(1e-14));
  REQUIRE(log_sum_exp(Vector{1000.0, 1000.0}) ==
          Catch::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
  REQUIRE_THROWS_AS(log_sum_exp(Vector{}), shape_error);
}

TEST_CASE("rng streams are deterministic and well ranged") {
  Rng a(1234), b(1234), c(99);
  bool all_equal = true;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    if (x != b.uniform()) all_equal = false;
  }
  REQUIRE(all_equal);
  REQUIRE(a.uniform() != c.uniform());

  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform(-2.0, 5.0);
    REQUIRE(x >= -2.0);
    REQUIRE(x < 5.0);
  }

  for (int i = 0; i < 100; ++i) REQUIRE(a.index(7) < 7);
  REQUIRE_THROWS_AS(a.index(0), std::invalid_argument);
}

TEST_CASE("normal draws have roughly standard moments") {
  Rng rng(42);
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    REQUIRE(std::isfinite(x));
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.03);
  REQUIRE(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("shuffle is a deterministic permutation") {
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  Rng a(5), b(5);
  auto va = v, vb = v;
  a.shuffle(va);
  b.shuffle(vb);
  REQUIRE(va == vb);
  REQUIRE(std::set<int>(va.begin(), va.end()) == std::set<int>(v.begin(), v.end()));
  // single-element and empty vectors are fixed points
  std::vector<int> one{9};
  a.shuffle(one);
  REQUIRE(one == std::vector<int>{9});
  std::vector<int> none;
  a.shuffle(none);
  REQUIRE(none.empty());
}

TEST_CASE("gaussian_sample") {
  Rng rng(3);
  const Vector mean{1.0, -2.0, 0.5};

  Matrix exact = gaussian_sample(rng, mean, 0.0, 4);
  REQUIRE(exact.rows == 4);
  REQUIRE(exact.cols == 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) REQUIRE(exact(i, j) == mean[j]);

  Rng r1(17), r2(17);
  REQUIRE(gaussian_sample(r1, mean, 1.5, 6) == gaussian_sample(r2, mean, 1.5, 6));
  REQUIRE_THROWS_AS(gaussian_sample(rng, mean, -0.1, 1), std::invalid_argument);

  Rng moments(8);
  const std::size_t n = 5000;
  const Matrix draws = gaussian_sample(moments, Vector{2.0}, 3.0, n);
  double sum = 0.0, sq = 0.0;
  for (double v : draws.data) {
    sum += v;
    sq += (v - 2.0) * (v - 2.0);
  }
  REQUIRE(std::abs(sum / n - 2.0) < 0.15);
  REQUIRE(std::abs(sq / n - 9.0) < 0.5);
}

TEST_CASE("format and parse doubles round-trip bit for bit") {
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    double v = rng.uniform(-1e6, 1e6);
    if (i % 7 == 0) v = std::ldexp(rng.uniform(-1.0, 1.0), -300 + static_cast<int>(rng.index(600)));
    const double back = parse_double(format_double(v));
    REQUIRE(back == v);
  }
  REQUIRE(parse_double(format_double(0.0)) == 0.0);
  REQUIRE(parse_double(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  REQUIRE_THROWS_AS(parse_double("1.2x"), parse_error);
  REQUIRE_THROWS_AS(parse_double(""), parse_error);
  REQUIRE_THROWS_AS(parse_u64("-3"), parse_error);
  REQUIRE(parse_u64("18446744073709551615") == 18446744073709551615ull);
  REQUIRE(parse_long("-42") == -42);
}
