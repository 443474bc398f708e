#include "livepipe/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace livepipe {

Mat::Mat(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Mat: data size " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(rows_) + "x" +
                                std::to_string(cols_));
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

namespace {

void check_matmul_dims(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: dimension mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " * " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()));
  }
}

inline void matmul_row(const Mat& a, const Mat& b, Mat& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t cols = b.cols();
  for (std::size_t j = 0; j < cols; ++j) {
    float acc = 0.0f;
    for (std::size_t k = 0; k < inner; ++k) acc += a(i, k) * b(k, j);
    out(i, j) = acc;
  }
}

}  // namespace

Mat matmul(const Mat& a, const Mat& b) {
  check_matmul_dims(a, b);
  Mat out(a.rows(), b.cols());
  const auto rows = static_cast<std::int64_t>(a.rows());
  const std::size_t work = a.rows() * a.cols() * b.cols();
#pragma omp parallel for schedule(static) if (work >= kParallelMatmulWork)
  for (std::int64_t i = 0; i < rows; ++i) matmul_row(a, b, out, static_cast<std::size_t>(i));
  return out;
}

Mat matmul_serial(const Mat& a, const Mat& b) {
  check_matmul_dims(a, b);
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
  return out;
}

Vec softmax(const Vec& v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  const auto in = v.span();
  const float mx = *std::max_element(in.begin(), in.end());
  Vec out(v.dim());
  float sum = 0.0f;
  for (std::size_t i = 0; i < v.dim(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] /= sum;
  return out;
}

void rope_rotate_inplace(std::span<float> v, std::int64_t pos, double base) {
  if (v.size() % 2 != 0) {
    throw std::invalid_argument("rope_rotate: dimension " + std::to_string(v.size()) +
                                " is odd");
  }
  if (pos == 0) return;
  const double dim = static_cast<double>(v.size());
  for (std::size_t k = 0; k < v.size() / 2; ++k) {
    const double freq = std::pow(base, -2.0 * static_cast<double>(k) / dim);
    const double angle = static_cast<double>(pos) * freq;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double x = v[2 * k];
    const double y = v[2 * k + 1];
    v[2 * k] = static_cast<float>(x * c - y * s);
    v[2 * k + 1] = static_cast<float>(x * s + y * c);
  }
}

Vec rope_rotate(const Vec& v, std::int64_t pos, double base) {
  Vec out = v;
  rope_rotate_inplace(out.span(), pos, base);
  return out;
}

float dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

float l2_norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return static_cast<float>(std::sqrt(acc));
}

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

Prng::Prng(std::uint64_t seed, std::uint64_t key)
    : seed_(seed), stream_(mix64(mix64(seed + kGolden) ^ (key * 0xD1B54A32D192ED03ull + 1))) {}

std::uint64_t Prng::next_u64() {
  ++counter_;
  return mix64(stream_ + counter_ * kGolden);
}

double Prng::next_unit() {
  // 53 random mantissa bits, shifted into (0, 1].
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double Prng::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = next_unit();
  const double u2 = next_unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Vec gaussian(Prng& prng, std::size_t dim) {
  Vec out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(prng.next_gaussian());
  return out;
}

Mat gaussian_mat(Prng& prng, std::size_t rows, std::size_t cols, float scale) {
  Mat out(rows, cols);
  for (float& x : out.span()) x = static_cast<float>(prng.next_gaussian()) * scale;
  return out;
}

}  // namespace livepipe
