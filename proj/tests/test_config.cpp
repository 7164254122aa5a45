#include <doctest.h>

#include <fstream>

#include "rlattack/config.hpp"
#include "test_util.hpp"

using namespace rlattack;

TEST_CASE("config parses key/value lines with comments and overrides") {
  const Config c = Config::parse("# header\nenv = catch\n\nmethod.delta = 0.5  # tuned\nmethod.delta=0.25\nflag = true\n");
  CHECK(c.get_string("env", "") == "catch");
  CHECK(c.get_double("method.delta", 0) == 0.25);
  CHECK(c.get_bool("flag", false));
  CHECK(c.get_int("missing", 7) == 7);
  const Config m = c.subtree("method.");
  CHECK(m.get_double("delta", 0) == 0.25);
  CHECK_FALSE(m.contains("env"));
}

TEST_CASE("config reports malformed input") {
  CHECK_THROWS_AS(Config::parse("just words\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse(" = 3\n"), ConfigError);
  const Config c = Config::parse("x = abc\ny = 1.5\n");
  CHECK_THROWS_AS(c.get_double("x", 0), ConfigError);
  CHECK_THROWS_AS(c.get_int("y", 0), ConfigError);
  CHECK_THROWS_AS(c.get_bool("x", false), ConfigError);
  CHECK_THROWS_AS(Config::load("/nonexistent/file.cfg"), ConfigError);
}

TEST_CASE("seed lists and ranges") {
  CHECK(parse_seed_list("1..4") == std::vector<std::uint64_t>{1, 2, 3, 4});
  CHECK(parse_seed_list("3,1,7") == std::vector<std::uint64_t>{3, 1, 7});
  CHECK(default_seeds().size() == 20);
  CHECK(default_seeds().front() == 1);
  CHECK_THROWS_AS(parse_seed_list("5..2"), ConfigError);
  CHECK_THROWS_AS(parse_seed_list(""), ConfigError);
  CHECK_THROWS_AS(parse_seed_list("a,b"), ConfigError);
}

TEST_CASE("config loads from a file") {
  const auto dir = testutil::temp_dir("config");
  std::ofstream(dir / "c.cfg") << "seeds = 1..3\nperturb.eps_inf = 0.05\n";
  const Config c = Config::load(dir / "c.cfg");
  CHECK(c.get_seeds("seeds", {}) == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(c.subtree("perturb.").get_double("eps_inf", 0) == 0.05);
}
