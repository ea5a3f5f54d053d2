#pragma once

// Minimal dense linear algebra: row-major double matrices, a numerically
// stable softmax, and a seeded deterministic RNG. Everything else in the
// library builds on these.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowshot {

struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Vector = std::vector<double>;

// Dense row-major matrix of 64-bit reals.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }

  Vector row_vector(std::size_t i) const {
    return Vector(data.begin() + static_cast<std::ptrdiff_t>(i * cols),
                  data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
  }

  void set_row(std::size_t i, std::span<const double> values) {
    std::copy(values.begin(), values.end(),
              data.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  bool operator==(const Matrix&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw shape_error("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw shape_error("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                      " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

inline Vector matvec(const Matrix& m, std::span<const double> v) {
  if (m.cols != v.size())
    throw shape_error("matvec: " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                      " * vector of length " + std::to_string(v.size()));
  Vector out(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) out[i] = dot(m.row(i), v);
  return out;
}

// max-shifted so that large logits cannot overflow exp()
inline Vector stable_softmax(std::span<const double> logits) {
  if (logits.empty()) throw shape_error("stable_softmax: empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw shape_error("log_sum_exp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

// Deterministic random source. The raw stream is std::mt19937_64, whose
// output sequence is fixed by the standard, and all distributions are
// implemented here rather than taken from <random>, so a given seed yields
// the same draws on every toolchain. (Normals use Box-Muller, whose last
// ulp depends on the platform's log/cos; the integer and uniform streams
// are exact everywhere.)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; consumes exactly two uniforms per call
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // uniform index in [0, n)
  std::size_t index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
    return static_cast<std::size_t>(next_u64() % n);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {  // Fisher-Yates
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// n rows of mean + sigma * standard normal, drawn row-major.
inline Matrix gaussian_sample(Rng& rng, const Vector& mean, double sigma, std::size_t n) {
  if (!(sigma >= 0.0))
    throw std::invalid_argument("gaussian_sample: sigma must be >= 0");
  Matrix out(n, mean.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < mean.size(); ++j)
      out(i, j) = mean[j] + sigma * rng.normal();
  return out;
}

}  // namespace lowshot
