#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ucast {

/// Calendar month, the time unit of every series and forecasting range.
struct YearMonth {
  int year = 0;
  int month = 0;  // 1..12

  static YearMonth parse(const std::string& s);  // "YYYY-MM"
  std::string str() const;
  YearMonth plus_months(int n) const;

  auto operator<=>(const YearMonth&) const = default;
};

/// Calendar-month difference b - a (positive when b is later).
int months_between(const YearMonth& a, const YearMonth& b);

/// Deterministic, platform-independent random stream. Hand-rolled (splitmix
/// core) because the <random> distributions are implementation-defined and
/// replay checks need bit-stable draws everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) { next(); next(); }

  std::uint64_t next();
  double uniform();                       // [0, 1)
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive
  double uniform_range(double lo, double hi);
  int poisson(double mean);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

/// Derive an independent child seed from a root seed and a subsystem tag so
/// sampler, augmentation, init, and generator streams never alias.
std::uint64_t derive_seed(std::uint64_t root, const std::string& tag);

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace ucast
