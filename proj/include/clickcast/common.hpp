#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clickcast {

// Error carries a short machine-readable code next to the human message.
// The CLI prints the code on its error line; tests match on it.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

private:
  std::string code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};
struct MalformedEventError : Error {
  explicit MalformedEventError(const std::string& msg) : Error("malformed_event", msg) {}
};
struct GeneratorContractError : Error {
  explicit GeneratorContractError(const std::string& msg) : Error("generator_contract", msg) {}
};
struct EncodingError : Error {
  explicit EncodingError(const std::string& msg) : Error("encoding", msg) {}
};
struct ModelError : Error {
  explicit ModelError(const std::string& msg) : Error("model", msg) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& msg) : Error("training", msg) {}
};
struct SearchError : Error {
  explicit SearchError(const std::string& msg) : Error("search", msg) {}
};
struct FitError : Error {
  explicit FitError(const std::string& msg) : Error("fit", msg) {}
};
struct MetricError : Error {
  explicit MetricError(const std::string& msg) : Error("metric", msg) {}
};
struct ReportError : Error {
  explicit ReportError(const std::string& msg) : Error("report", msg) {}
};
struct LoadError : Error {
  explicit LoadError(const std::string& msg) : Error("load", msg) {}
};
struct NotFoundError : Error {
  explicit NotFoundError(const std::string& msg) : Error("not_found", msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};
struct InsufficientDataError : Error {
  explicit InsufficientDataError(const std::string& msg) : Error("insufficient_data", msg) {}
};

// 64-bit FNV-1a. Used for feature hashing and as the frozen-file checksum.
inline constexpr uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr uint64_t kFnvPrime = 1099511628211ull;

inline uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// distributions below are hand-rolled because the std distributions are
// implementation-defined and would break cross-toolchain reproducibility.
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed), seed_base_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  uint64_t uniform_int(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

  // Poisson via inversion; fine for the small means used here.
  int poisson(double lambda) {
    double l = std::exp(-lambda);
    double p = 1.0;
    int k = 0;
    do {
      ++k;
      p *= uniform();
    } while (p > l);
    return k - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream, stable under reordering of sibling draws.
  Rng derive(uint64_t stream) const { return Rng(splitmix64(seed_base_ ^ splitmix64(stream))); }

private:
  std::mt19937_64 engine_;
  uint64_t seed_base_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Deterministic per-(seed, index) seed for independent work items.
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
  return splitmix64(base ^ splitmix64(index + 0x51ed2701));
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline bool contains_ci(const std::string& haystack, const std::string& needle) {
  return lower(haystack).find(lower(needle)) != std::string::npos;
}

}  // namespace clickcast
