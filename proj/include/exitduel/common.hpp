#ifndef EXITDUEL_COMMON_HPP
#define EXITDUEL_COMMON_HPP

// Shared plumbing: deterministic RNG substreams, fixed-block parallel loops
// and Monte-Carlo accumulators.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

namespace exitduel {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kNeverIndex = static_cast<std::size_t>(-1);
inline constexpr std::size_t kBlock = 256;  // path block size for parallel loops

// Independent engine for (seed, tag, index). Identical arguments always
// reproduce the identical stream, which is what common-random-number
// comparisons rely on.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t tag,
                                 std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Worker count: hardware concurrency, capped by EXITDUEL_THREADS if set.
inline unsigned worker_count() {
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("EXITDUEL_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

// Runs fn(block_index, begin, end) over fixed-size blocks of [0, n).
// Block boundaries do not depend on the worker count, so per-block results
// merged in block order are identical from run to run.
inline void for_each_block(
    std::size_t n, std::size_t block_size,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (block_size == 0) throw std::invalid_argument("for_each_block: block_size == 0");
  const std::size_t n_blocks = (n + block_size - 1) / block_size;
  const unsigned workers = std::min<std::size_t>(worker_count(), n_blocks);

  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * block_size;
    const std::size_t end = std::min(n, begin + block_size);
    fn(b, begin, end);
  };

  if (workers <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) run_block(b);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= n_blocks) return;
      try {
        run_block(b);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
};

// Plain sum/sum-of-squares accumulator. Additions happen in path order
// within a block and blocks merge in block order, so totals are
// deterministic.
struct McAccumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  void merge(const McAccumulator& o) {
    sum += o.sum;
    sum_sq += o.sum_sq;
    n += o.n;
  }
  McEstimate estimate() const {
    McEstimate e;
    e.n_paths = n;
    if (n == 0) return e;
    e.estimate = sum / static_cast<double>(n);
    if (n > 1) {
      const double var =
          std::max(0.0, (sum_sq - sum * sum / static_cast<double>(n)) /
                            static_cast<double>(n - 1));
      e.std_error = std::sqrt(var / static_cast<double>(n));
    }
    return e;
  }
};

// Monte-Carlo mean of per_path(i) over i in [0, n_paths).
template <class PathFn>
McEstimate mc_over_paths(std::size_t n_paths, std::size_t block_size,
                         PathFn&& per_path) {
  const std::size_t n_blocks = (n_paths + block_size - 1) / block_size;
  std::vector<McAccumulator> acc(n_blocks);
  for_each_block(n_paths, block_size,
                 [&](std::size_t b, std::size_t begin, std::size_t end) {
                   McAccumulator local;
                   for (std::size_t i = begin; i < end; ++i) local.add(per_path(i));
                   acc[b] = local;
                 });
  McAccumulator total;
  for (const auto& a : acc) total.merge(a);
  return total.estimate();
}

}  // namespace exitduel

#endif  // EXITDUEL_COMMON_HPP
