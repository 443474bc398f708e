#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace livepipe {

// Dense float vector. Entries are expected to stay finite.
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t dim, float fill = 0.0f) : data_(dim, fill) {}
  explicit Vec(std::vector<float> data) : data_(std::move(data)) {}
  Vec(std::initializer_list<float> init) : data_(init) {}

  std::size_t dim() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }
  const std::vector<float>& values() const { return data_; }

  bool operator==(const Vec&) const = default;

 private:
  std::vector<float> data_;
};

// Row-major dense float matrix.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, float fill = 0.0f);
  Mat(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Mat identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Work (rows * cols * inner) above which matmul fans rows out over OpenMP.
// Below it the loop runs on the calling thread; both paths produce the same
// bits because every output element keeps its ascending-k accumulation.
inline constexpr std::size_t kParallelMatmulWork = 1u << 18;

// Product a * b. Rows are distributed over OpenMP threads for large
// products; each element is summed over ascending inner index.
Mat matmul(const Mat& a, const Mat& b);

// Single-threaded reference for matmul, kept for tests and benchmarks.
Mat matmul_serial(const Mat& a, const Mat& b);

Vec softmax(const Vec& v);

// Rotates consecutive pairs (v[2k], v[2k+1]) by pos * base^(-2k/dim).
// Angles are formed in double so large positions keep their precision.
Vec rope_rotate(const Vec& v, std::int64_t pos, double base = 10000.0);
void rope_rotate_inplace(std::span<float> v, std::int64_t pos, double base = 10000.0);

float dot(std::span<const float> a, std::span<const float> b);
float l2_norm(std::span<const float> v);

// Counter-based generator: sample n of stream (seed, key) is a pure
// function of (seed, key, n), so a block's noise can be drawn by whichever
// worker owns the block without coordinating with anyone else.
class Prng {
 public:
  explicit Prng(std::uint64_t seed, std::uint64_t key = 0);

  std::uint64_t next_u64();
  // Uniform in (0, 1].
  double next_unit();
  double next_gaussian();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Vec gaussian(Prng& prng, std::size_t dim);
Mat gaussian_mat(Prng& prng, std::size_t rows, std::size_t cols, float scale = 1.0f);

}  // namespace livepipe
