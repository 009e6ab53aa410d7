#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <sstream>

#include "procqrf/error.hpp"
#include "procqrf/util.hpp"

using namespace procqrf;

TEST_CASE("splitmix64 and fnv1a match their published reference values") {
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("derived seeds differ per stream and are stable") {
  CHECK(derive_seed(7, 0) != derive_seed(7, 1));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("Rng streams are reproducible and in range") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs |= x != c.next();
  }
  CHECK(differs);

  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
  CHECK(r.below(1) == 0);
}

TEST_CASE("Rng normal and exponential draws have the right moments") {
  Rng r(9);
  const int n = 200000;
  double sum = 0, sq = 0, esum = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
    esum += r.exponential(3.0);
  }
  CHECK(std::fabs(sum / n) < 0.01);
  CHECK(std::fabs(sq / n - 1.0) < 0.02);
  CHECK(std::fabs(esum / n - 3.0) < 0.05);
}

TEST_CASE("format_double is shortest round-trip") {
  CHECK(format_double(3.0) == "3");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-2.5) == "-2.5");
  Rng r(5);
  for (int i = 0; i < 2000; ++i) {
    const double v = (r.uniform() - 0.5) * std::pow(10.0, static_cast<double>(r.below(20)) - 10.0);
    const auto back = parse_double(format_double(v));
    REQUIRE(back.has_value());
    CHECK(*back == v);
  }
  CHECK_FALSE(parse_double("abc").has_value());
  CHECK_FALSE(parse_double("1.5x").has_value());
  CHECK_FALSE(parse_double("").has_value());
}

TEST_CASE("csv reader handles quoting, embedded newlines and CRLF") {
  std::istringstream in("a,b,c\r\n\"x,1\",\"he said \"\"hi\"\"\",\"line\nbreak\"\r\n1,,3\n");
  csv::Reader reader(in);
  csv::Row row;
  REQUIRE(reader.next(row));
  CHECK(row == csv::Row{"a", "b", "c"});
  CHECK(reader.line() == 1);
  REQUIRE(reader.next(row));
  CHECK(row == csv::Row{"x,1", "he said \"hi\"", "line\nbreak"});
  CHECK(reader.line() == 2);
  REQUIRE(reader.next(row));
  CHECK(row == csv::Row{"1", "", "3"});
  CHECK(reader.line() == 4);
  CHECK_FALSE(reader.next(row));
}

TEST_CASE("csv write_row round-trips through the reader") {
  const csv::Row original{"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  std::stringstream io;
  csv::write_row(io, original);
  csv::Reader reader(io);
  csv::Row back;
  REQUIRE(reader.next(back));
  CHECK(back == original);
}

TEST_CASE("error codes have names") {
  CHECK(to_string(ErrorCode::BadTimestamp) == "BadTimestamp");
  const Error e(ErrorCode::EmptyLog, "nothing");
  CHECK(e.code() == ErrorCode::EmptyLog);
}
