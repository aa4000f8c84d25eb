#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include "helpers.hpp"
#include "ucast/common.hpp"

using namespace ucast;

TEST_CASE("YearMonth parses and round-trips") {
  auto ym = YearMonth::parse("2018-01");
  CHECK(ym.year == 2018);
  CHECK(ym.month == 1);
  CHECK(ym.str() == "2018-01");
  CHECK(YearMonth::parse("1999-12").str() == "1999-12");
}

TEST_CASE("YearMonth rejects malformed input") {
  CHECK_THROWS_AS(YearMonth::parse("2018-13"), std::invalid_argument);
  CHECK_THROWS_AS(YearMonth::parse("2018-00"), std::invalid_argument);
  CHECK_THROWS_AS(YearMonth::parse("2018"), std::invalid_argument);
  CHECK_THROWS_AS(YearMonth::parse("18-01"), std::invalid_argument);
  CHECK_THROWS_AS(YearMonth::parse("2018/01"), std::invalid_argument);
  CHECK_THROWS_AS(YearMonth::parse(""), std::invalid_argument);
  CHECK_THROWS_AS(YearMonth::parse("abcd-ef"), std::invalid_argument);
}

TEST_CASE("YearMonth arithmetic crosses year boundaries") {
  auto ym = YearMonth::parse("2018-11");
  CHECK(ym.plus_months(1).str() == "2018-12");
  CHECK(ym.plus_months(2).str() == "2019-01");
  CHECK(ym.plus_months(14).str() == "2020-01");
  CHECK(ym.plus_months(0).str() == "2018-11");
  CHECK(ym.plus_months(-11).str() == "2017-12");

  CHECK(months_between(YearMonth::parse("2018-01"), YearMonth::parse("2018-04")) == 3);
  CHECK(months_between(YearMonth::parse("2018-10"), YearMonth::parse("2019-02")) == 4);
  CHECK(months_between(YearMonth::parse("2019-02"), YearMonth::parse("2018-10")) == -4);
  CHECK(months_between(YearMonth::parse("2020-06"), YearMonth::parse("2020-06")) == 0);
}

TEST_CASE("YearMonth ordering follows the calendar") {
  CHECK(YearMonth::parse("2018-12") < YearMonth::parse("2019-01"));
  CHECK(YearMonth::parse("2019-03") == YearMonth::parse("2019-03"));
  CHECK(YearMonth::parse("2020-01") > YearMonth::parse("2019-12"));
}

TEST_CASE("Rng replays bit-identically from the same seed") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 1000; ++i) CHECK(a.next() == b.next());

  Rng c(1234), d(4321);
  bool differs = false;
  for (int i = 0; i < 16; ++i) differs |= (c.next() != d.next());
  CHECK(differs);
}

TEST_CASE("Rng uniform stays in [0,1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("Rng uniform_int covers both endpoints inclusively") {
  Rng rng(11);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    auto v = rng.uniform_int(3, 7);
    CHECK(v >= 3);
    CHECK(v <= 7);
    seen.insert(v);
  }
  CHECK(seen == std::set<std::int64_t>{3, 4, 5, 6, 7});

  // Degenerate interval is legal and constant.
  for (int i = 0; i < 10; ++i) CHECK(rng.uniform_int(5, 5) == 5);
}

TEST_CASE("Rng poisson matches its mean at scale") {
  Rng rng(19);
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    int k = rng.poisson(2.5);
    CHECK(k >= 0);
    sum += k;
  }
  CHECK(sum / n == doctest::Approx(2.5).epsilon(0.05));

  for (int i = 0; i < 100; ++i) CHECK(rng.poisson(0.0) == 0);
}

TEST_CASE("Rng shuffle is a deterministic permutation") {
  std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> v2 = v1;
  Rng a(5), b(5);
  a.shuffle(v1);
  b.shuffle(v2);
  CHECK(v1 == v2);
  std::multiset<int> elems(v1.begin(), v1.end());
  CHECK(elems == std::multiset<int>{1, 2, 3, 4, 5, 6, 7, 8});
}

TEST_CASE("derive_seed separates subsystem streams") {
  auto s1 = derive_seed(42, "sampler");
  auto s2 = derive_seed(42, "augment");
  auto s3 = derive_seed(43, "sampler");
  CHECK(s1 != s2);
  CHECK(s1 != s3);
  CHECK(derive_seed(42, "sampler") == s1);
}

TEST_CASE("sha256 matches published vectors") {
  CHECK(sha256_hex(nullptr, 0) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const char* abc = "abc";
  CHECK(sha256_hex(abc, 3) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("sha256_file hashes file bytes") {
  testutil::TempDir dir;
  auto path = dir / "blob.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "abc";
  }
  CHECK(sha256_file(path) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("require throws invalid_argument with the given message") {
  CHECK_NOTHROW(require(true, "never"));
  CHECK_THROWS_WITH_AS(require(false, "bad width"), "bad width", std::invalid_argument);
}
