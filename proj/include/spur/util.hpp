#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace spur {

// ---------------------------------------------------------------------------
// string helpers
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = nl + 1;
  }
  return lines;
}

inline bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

inline std::string replace_all(std::string text, std::string_view from,
                               std::string_view to) {
  if (from.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

// Collapses runs of whitespace to single spaces and lowercases; used for
// loose text equality (rubric item matching, NONE detection).
inline std::string normalize_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = true;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space && !out.empty()) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// deterministic randomness
//
// mt19937 output is pinned by the standard; the std distributions are not.
// Everything that must reproduce bit-for-bit across platforms goes through
// these helpers instead of <random> distributions.
// ---------------------------------------------------------------------------

inline std::uint32_t draw_below(std::mt19937& rng, std::uint32_t bound) {
  // unbiased rejection sampling
  if (bound <= 1) return 0;
  const std::uint32_t limit = UINT32_MAX - UINT32_MAX % bound;
  std::uint32_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

inline double draw_unit(std::mt19937& rng) {
  const std::uint64_t hi = rng();
  const std::uint64_t lo = rng();
  return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
}

inline double draw_gaussian(std::mt19937& rng) {
  // Box-Muller; discards the second variate to keep the stream simple.
  double u1 = draw_unit(rng);
  double u2 = draw_unit(rng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = draw_below(rng, static_cast<std::uint32_t>(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

// ---------------------------------------------------------------------------
// warning collection
// ---------------------------------------------------------------------------

// Parsers and coercion rules report protocol warnings here rather than
// failing; runs surface the count in their manifest.
class WarningLog {
 public:
  void add(std::string message) {
    std::lock_guard<std::mutex> lock(mu_);
    messages_.push_back(std::move(message));
  }

  std::vector<std::string> messages() const {
    std::lock_guard<std::mutex> lock(mu_);
    return messages_;
  }

  std::size_t count() const {
    std::lock_guard<std::mutex> lock(mu_);
    return messages_.size();
  }

  bool empty() const { return count() == 0; }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> messages_;
};

inline void warn(WarningLog* log, std::string message) {
  if (log != nullptr) log->add(std::move(message));
}

// ---------------------------------------------------------------------------
// concurrency
// ---------------------------------------------------------------------------

class Semaphore {
 public:
  explicit Semaphore(std::size_t count) : count_(count) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return count_ > 0; });
    --count_;
  }

  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t count_;
};

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(Semaphore& s) : sem_(s) { sem_.acquire(); }
  ~SemaphoreGuard() { sem_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  Semaphore& sem_;
};

template <typename T>
struct SlotResult {
  std::optional<T> value;
  std::exception_ptr error;
};

// Runs fn(index) over [0, n) with a bounded worker pool and returns results
// in index order. Exceptions are captured per slot so the caller can apply
// its own skip/fail policy.
template <typename T, typename Fn>
std::vector<SlotResult<T>> parallel_map(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<SlotResult<T>> results(n);
  if (n == 0) return results;
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        results[i].value = fn(i);
      } catch (...) {
        results[i].error = std::current_exception();
      }
    }
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          results[i].value = fn(i);
        } catch (...) {
          results[i].error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace spur
