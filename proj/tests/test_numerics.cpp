#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "livepipe/numerics.hpp"

using namespace livepipe;

namespace {

Mat triple_loop(const Mat& a, const Mat& b) {
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

Vec random_vec(std::uint64_t seed, std::size_t dim) {
  Prng p(seed, 99);
  return gaussian(p, dim);
}

}  // namespace

TEST_CASE("matmul identity and scalars") {
  Prng p(3, 1);
  const Mat m = gaussian_mat(p, 3, 5);
  CHECK(matmul(Mat::identity(3), m) == m);
  CHECK(matmul(Mat(1, 1, {2.0f}), Mat(1, 1, {3.0f}))(0, 0) == 6.0f);
  CHECK_THROWS(matmul(Mat(2, 3), Mat(2, 3)));
}

TEST_CASE("matmul matches an independent triple loop bitwise") {
  Prng p(11, 2);
  const Mat a = gaussian_mat(p, 4, 4);
  const Mat b = gaussian_mat(p, 4, 4);
  CHECK(matmul(a, b) == triple_loop(a, b));
  CHECK(matmul_serial(a, b) == triple_loop(a, b));

  // big enough to take the threaded path
  const Mat big_a = gaussian_mat(p, 96, 64);
  const Mat big_b = gaussian_mat(p, 64, 96);
  REQUIRE(big_a.rows() * big_a.cols() * big_b.cols() >= kParallelMatmulWork);
  CHECK(matmul(big_a, big_b) == triple_loop(big_a, big_b));
}

TEST_CASE("softmax") {
  const Vec u = softmax({0.0f, 0.0f, 0.0f});
  for (float x : u.span()) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  const Vec big = softmax({1000.0f, 0.0f});
  CHECK(big[0] == 1.0f);
  CHECK(big[1] == 0.0f);
  CHECK(std::isfinite(big[0]));

  // reference values at 40 significant digits
  const double ref[3] = {0.090030573170380457998, 0.24472847105479765247, 0.66524095577482188953};
  const Vec s = softmax({1.0f, 2.0f, 3.0f});
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(s[i] - ref[i]) < 1e-6);
    sum += s[i];
  }
  CHECK(std::abs(sum - 1.0) < 1e-6);
  CHECK_THROWS(softmax(Vec{}));
}

TEST_CASE("rope rotation") {
  const Vec v = random_vec(5, 16);
  CHECK(rope_rotate(v, 0) == v);
  for (std::int64_t p : {1, 7, 123, 40000, 1000000}) {
    CHECK(std::abs(l2_norm(rope_rotate(v, p).span()) - l2_norm(v.span())) < 1e-6 * (1 + l2_norm(v.span())));
  }
  CHECK_THROWS(rope_rotate(Vec(3), 1));

  const Vec q = random_vec(6, 8);
  const Vec k = random_vec(7, 8);
  CHECK(std::abs(dot(rope_rotate(q, 5).span(), rope_rotate(k, 3).span()) -
                 dot(rope_rotate(q, 7).span(), rope_rotate(k, 5).span())) < 1e-5);
  for (std::int64_t shift : {1, 10, 10000, 40000}) {
    for (auto [a, b] : {std::pair{0, 0}, {3, 1}, {9, 2}}) {
      const float base = dot(rope_rotate(q, a).span(), rope_rotate(k, b).span());
      const float moved = dot(rope_rotate(q, a + shift).span(), rope_rotate(k, b + shift).span());
      CHECK(std::abs(base - moved) < 1e-5);
    }
  }
}

TEST_CASE("gaussian stream") {
  Prng a(42, 3);
  Prng b(42, 3);
  CHECK(gaussian(a, 32) == gaussian(b, 32));
  Prng c(43, 3);
  Prng d(42, 3);
  CHECK(gaussian(c, 32) != gaussian(d, 32));

  Prng p(2024, 0);
  const Vec xs = gaussian(p, 100000);
  double mean = 0.0;
  for (float x : xs.span()) mean += x;
  mean /= xs.dim();
  double var = 0.0;
  for (float x : xs.span()) var += (x - mean) * (x - mean);
  var /= xs.dim() - 1;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);
}
