// Wall-clock comparison of the serial and OpenMP matmul kernels, and of the
// sequential and pipelined engines on the same rollout.
//
//   livepipe_bench [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <omp.h>

#include "livepipe/engine.hpp"
#include "livepipe/numerics.hpp"

using namespace livepipe;

namespace {

template <typename F>
double best_of(int repeats, F&& f) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 3;
  std::printf("openmp threads: %d\n\n", omp_get_max_threads());

  std::printf("%-6s %12s %12s %8s %s\n", "n", "serial s", "openmp s", "speedup", "equal");
  for (std::size_t n : {32u, 64u, 128u, 256u, 512u}) {
    Prng p(1, n);
    const Mat a = gaussian_mat(p, n, n);
    const Mat b = gaussian_mat(p, n, n);
    Mat s, o;
    const double ts = best_of(repeats, [&] { s = matmul_serial(a, b); });
    const double to = best_of(repeats, [&] { o = matmul(a, b); });
    std::printf("%-6zu %12.6f %12.6f %8.2f %s\n", n, ts, to, ts / to, s == o ? "yes" : "NO");
  }

  std::printf("\n%-12s %6s %12s\n", "engine", "blocks", "wall s");
  for (EngineMode mode : {EngineMode::kSequential, EngineMode::kTpp, EngineMode::kCleanKv}) {
    EngineConfig c;
    c.mode = mode;
    c.blocks = 64;
    const double t = best_of(repeats, [&] { run_engine(c); });
    std::printf("%-12s %6lld %12.6f\n", std::string(to_string(mode)).c_str(), static_cast<long long>(c.blocks), t);
  }
  return 0;
}
