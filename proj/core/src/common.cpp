#include "ucast/common.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <openssl/evp.h>

namespace ucast {

namespace {

bool all_digits(const std::string& s, std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

}  // namespace

YearMonth YearMonth::parse(const std::string& s) {
  require(s.size() == 7 && s[4] == '-' && all_digits(s, 0, 4) && all_digits(s, 5, 7),
          "date must be YYYY-MM, got '" + s + "'");
  YearMonth ym;
  ym.year = std::stoi(s.substr(0, 4));
  ym.month = std::stoi(s.substr(5, 2));
  require(ym.month >= 1 && ym.month <= 12, "month out of range in '" + s + "'");
  return ym;
}

std::string YearMonth::str() const {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
  return buf;
}

YearMonth YearMonth::plus_months(int n) const {
  int total = year * 12 + (month - 1) + n;
  require(total >= 0, "date arithmetic went before year 0");
  return YearMonth{total / 12, total % 12 + 1};
}

int months_between(const YearMonth& a, const YearMonth& b) {
  return (b.year * 12 + b.month) - (a.year * 12 + a.month);
}

std::uint64_t Rng::next() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  require(lo <= hi, "uniform_int range is empty");
  std::uint64_t n = static_cast<std::uint64_t>(hi - lo) + 1;
  if (n == 0) return static_cast<std::int64_t>(next());  // full 64-bit span
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = next();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % n);
}

double Rng::uniform_range(double lo, double hi) { return lo + uniform() * (hi - lo); }

int Rng::poisson(double mean) {
  require(mean >= 0.0, "poisson mean must be non-negative");
  if (mean == 0.0) return 0;
  // Knuth's product method; fine for the small means used here.
  double limit = std::exp(-mean);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= uniform();
  } while (p > limit);
  return k - 1;
}

std::uint64_t derive_seed(std::uint64_t root, const std::string& tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a over the tag bytes
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  Rng mix(root ^ h);
  return mix.next();
}

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  require(EVP_Digest(data, size, digest, &digest_len, EVP_sha256(), nullptr) == 1,
          "sha256 digest failed");
  std::string hex;
  hex.reserve(2 * digest_len);
  static const char* k = "0123456789abcdef";
  for (unsigned int i = 0; i < digest_len; ++i) {
    hex.push_back(k[digest[i] >> 4]);
    hex.push_back(k[digest[i] & 0xF]);
  }
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open file for hashing: " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    std::streamsize got = in.gcount();
    if (got > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_DigestFinal_ex(ctx, digest, &digest_len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  hex.reserve(2 * digest_len);
  static const char* k = "0123456789abcdef";
  for (unsigned int i = 0; i < digest_len; ++i) {
    hex.push_back(k[digest[i] >> 4]);
    hex.push_back(k[digest[i] & 0xF]);
  }
  return hex;
}

}  // namespace ucast
