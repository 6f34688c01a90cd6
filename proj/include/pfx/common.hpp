#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pfx {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class Errc {
  shape,         // tensor dimension mismatch
  length,        // sequence exceeds max_len
  format,        // malformed file (checkpoint, vocab, jsonl, report)
  config,        // invalid configuration value
  training,      // training diverged (NaN loss)
  optimization,  // engine step produced NaN
  evaluation,    // empty denominator / empty test set
  io,            // filesystem failure
  internal,      // broken invariant inside the library
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::shape: return "shape";
    case Errc::length: return "length";
    case Errc::format: return "format";
    case Errc::config: return "config";
    case Errc::training: return "training";
    case Errc::optimization: return "optimization";
    case Errc::evaluation: return "evaluation";
    case Errc::io: return "io";
    case Errc::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc kind, const std::string& msg)
      : std::runtime_error(std::string(errc_name(kind)) + " error: " + msg),
        kind_(kind) {}

  Errc kind() const { return kind_; }

 private:
  Errc kind_;
};

[[noreturn]] inline void fail(Errc kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void require(bool cond, Errc kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stable named substream derivation: one master seed fans out to independent
// streams for corpus generation, training, poisoning, per-label removal, ...
inline uint64_t derive_seed(uint64_t base, std::string_view label, uint64_t index = 0) {
  return splitmix64(base ^ fnv1a64(label) ^ (index * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
}

// ---------------------------------------------------------------------------
// Rng
//
// mt19937_64 core with hand-rolled draw functions so that results do not
// depend on the standard library's distribution implementations.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  // Unbiased integer in [0, n).
  uint64_t below(uint64_t n) {
    require(n > 0, Errc::internal, "Rng::below(0)");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Inclusive range.
  int64_t int_range(int64_t lo, int64_t hi) {
    require(lo <= hi, Errc::internal, "Rng::int_range empty");
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), in draw order.
  std::vector<size_t> sample_distinct(size_t n, size_t k) {
    require(k <= n, Errc::internal, "sample_distinct: k > n");
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < k; ++i) {
      const size_t j = i + static_cast<size_t>(below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Minimal dense matrix (row-major)
// ---------------------------------------------------------------------------

template <class Real>
struct Mat {
  int32_t rows = 0;
  int32_t cols = 0;
  std::vector<Real> data;

  Mat() = default;
  Mat(int32_t r, int32_t c) { resize(r, c); }

  void resize(int32_t r, int32_t c) {
    rows = r;
    cols = c;
    data.assign(static_cast<size_t>(r) * static_cast<size_t>(c), Real(0));
  }

  void zero() { std::fill(data.begin(), data.end(), Real(0)); }

  Real* row(int32_t r) { return data.data() + static_cast<size_t>(r) * cols; }
  const Real* row(int32_t r) const { return data.data() + static_cast<size_t>(r) * cols; }

  Real& operator()(int32_t r, int32_t c) { return data[static_cast<size_t>(r) * cols + c]; }
  const Real& operator()(int32_t r, int32_t c) const { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

template <class Real>
bool all_finite(const std::vector<Real>& v) {
  for (Real x : v) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

}  // namespace pfx
