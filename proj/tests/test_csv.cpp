#include <doctest.h>

#include <string>

#include "matext/csv.hpp"
#include "matext/error.hpp"

using matext::CsvTable;
using matext::Error;
using matext::ErrorCode;

TEST_CASE("parse_csv handles plain tables") {
  const auto t = matext::parse_csv("a,b,c\n1,2,3\n4,5,6\n");
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0] == std::vector<std::string>{"1", "2", "3"});
  CHECK(t.rows[1] == std::vector<std::string>{"4", "5", "6"});
}

TEST_CASE("parse_csv handles quoting, CRLF and missing trailing newline") {
  const auto t = matext::parse_csv("id,text\r\n\"a,1\",\"say \"\"hi\"\"\"\r\nb2,no final newline");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "a,1");
  CHECK(t.rows[0][1] == "say \"hi\"");
  CHECK(t.rows[1] == std::vector<std::string>{"b2", "no final newline"});
}

TEST_CASE("parse_csv keeps embedded newlines inside quotes") {
  const auto t = matext::parse_csv("id,text\nx,\"two\nlines\"\n");
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][1] == "two\nlines");
}

TEST_CASE("parse_csv rejects ragged rows") {
  CHECK_THROWS_AS(matext::parse_csv("a,b\n1\n"), Error);
  try {
    matext::parse_csv("a,b\n1,2,3\n");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaMismatch);
  }
}

TEST_CASE("csv round-trips through serialize/parse") {
  CsvTable t;
  t.header = {"id", "note"};
  t.rows = {{"a", "plain"}, {"b", "with,comma"}, {"c", "with \"quote\""}, {"d", "two\nlines"}};
  const auto back = matext::parse_csv(matext::csv_to_string(t));
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
}

TEST_CASE("col lookup distinguishes present and absent") {
  const auto t = matext::parse_csv("a,b\n1,2\n");
  CHECK(t.col("b") == 1);
  CHECK(t.col("z") == -1);
  CHECK(t.require_col("a") == 0);
  CHECK_THROWS_AS(t.require_col("z"), Error);
}

TEST_CASE("read_csv reports missing files") {
  try {
    matext::read_csv("/nonexistent/path/file.csv");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FileNotFound);
  }
}
