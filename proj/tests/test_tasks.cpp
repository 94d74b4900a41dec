#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "neat/errors.hpp"
#include "neat/tasks.hpp"

using namespace neat;
using namespace neat::train;

namespace {

std::string write_csv(const char* name, const std::string& body) {
  const auto p = (std::filesystem::temp_directory_path() / (std::string("neat_test_") + name + ".csv")).string();
  std::ofstream(p) << body;
  return p;
}

std::size_t parse_error_line(const std::string& body) {
  const std::string p = write_csv("bad", body);
  try {
    read_classification_csv(p);
  } catch (const ParseError& e) {
    std::remove(p.c_str());
    return e.line();
  }
  std::remove(p.c_str());
  return 0;
}

}  // namespace

TEST_CASE("classification CSV parses features and labels") {
  const std::string p = write_csv("good", "x1,x2,label\n0.5,1,0\n-2,3e-1,2\n1,1,1\n");
  const CsvTable t = read_classification_csv(p);
  CHECK(t.header.size() == 3);
  REQUIRE(t.features.size() == 3);
  CHECK(t.features[1][1] == doctest::Approx(0.3));
  CHECK(t.labels == std::vector<std::size_t>{0, 2, 1});
  std::remove(p.c_str());
}

TEST_CASE("malformed CSV reports the offending line") {
  CHECK(parse_error_line("a,b,label\n1,2,0\n1,oops,1\n") == 3);
  CHECK(parse_error_line("a,b,label\n1,2,0\n1,2\n3,4,1\n") == 3);
  CHECK(parse_error_line("a,b,label\n1,2,0\n1,2,-1\n") == 3);
  CHECK(parse_error_line("a,b,label\n1,,0\n1,2,1\n") == 2);
}

TEST_CASE("tasks are deterministic in their spec") {
  TaskSpec s;
  s.n_train = 20;
  s.n_val = 5;
  s.seed = 4;
  const Dataset a = make_task(s), b = make_task(s);
  CHECK(a.train.inputs == b.train.inputs);
  CHECK(a.train.targets == b.train.targets);
  CHECK(a.train.inputs.rows() == s.d_in);
  CHECK(a.train.targets.rows() == s.d_out);
  CHECK(a.val.size() == 5);
  s.seed = 5;
  CHECK_FALSE(make_task(s).train.inputs == a.train.inputs);
}

TEST_CASE("invariant_shift plants its base layer") {
  TaskSpec s;
  s.kind = TaskKind::invariant_shift;
  s.d_in = 10;
  s.d_out = 6;
  s.n_train = 12;
  s.n_val = 4;
  const Dataset d = make_task(s);
  REQUIRE(d.reference.has_value());
  CHECK(d.reference->weights.front().rows() == 6);
  CHECK(d.reference->weights.front().cols() == 10);
}

TEST_CASE("invalid dimensions are config errors") {
  TaskSpec s;
  s.d_in = 0;
  CHECK_THROWS_AS(make_task(s), ConfigError);
}
