#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "eses/config.hpp"

using namespace eses;
namespace fs = std::filesystem;

namespace {

fs::path write_cfg(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("eses_config_" + name + ".cfg");
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("every key has a default and keys are unique") {
  const Config c;
  std::set<std::string> seen;
  for (const auto& k : config_registry()) {
    REQUIRE(seen.insert(k.key).second);
    CHECK(c.str(k.key) == k.default_value);
  }
  CHECK(c.count("study.n") == 12);
  CHECK(c.num("sense.f_meas") == 400e6);
}

TEST_CASE("section headers and dotted keys both work") {
  const auto p = write_cfg("sections", "# comment\nrun.seed = 9\n[study]\nn = 10\nk = 5\n");
  Config c;
  c.merge_file(p);
  CHECK(c.u64("run.seed") == 9);
  CHECK(c.count("study.n") == 10);
  CHECK(c.count("study.k") == 5);
  CHECK(c.str("study.a") == "1");
  fs::remove(p);
}

TEST_CASE("unknown keys are listed together") {
  const auto p = write_cfg("unknown", "study.n = 4\nstudy.bogus = 1\n[hr]\nnope = 2\n");
  Config c;
  try {
    c.merge_file(p);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("study.bogus") != std::string::npos);
    CHECK(msg.find("hr.nope") != std::string::npos);
  }
  CHECK(c.count("study.n") == 12);
  fs::remove(p);
  CHECK_THROWS_AS(c.set("x.y", "1"), ConfigError);
}

TEST_CASE("a missing file is a config error") {
  Config c;
  CHECK_THROWS_AS(c.merge_file("/nonexistent/eses.cfg"), ConfigError);
}

TEST_CASE("lists and ranges") {
  CHECK(parse_list("k", "1, 2 ,3") == std::vector<double>{1, 2, 3});
  const auto r = parse_list("k", "0.01:0.01:0.2");
  REQUIRE(r.size() == 20);
  CHECK(r.back() == Catch::Approx(0.2));
  CHECK(parse_list("k", "0:1:2,5") == std::vector<double>{0, 1, 2, 5});
  CHECK(Config().list("frontier.widths").size() == 3000);
  CHECK_THROWS_AS(parse_list("k", "1:0:2"), ConfigError);
  CHECK_THROWS_AS(parse_list("k", "3:1:2"), ConfigError);
  CHECK_THROWS_AS(parse_list("k", "1:2"), ConfigError);
}

TEST_CASE("malformed numbers are rejected with the key name") {
  Config c;
  c.set("study.n", "twelve");
  try {
    (void)c.count("study.n");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("study.n") != std::string::npos);
  }
  c.set("study.n", "-3");
  CHECK_THROWS_AS(c.count("study.n"), ConfigError);
  c.set("study.a", "1.5x");
  CHECK_THROWS_AS(c.num("study.a"), ConfigError);
  c.set("hr.harmonics", "2,3.5");
  CHECK_THROWS_AS(c.int_list("hr.harmonics"), ConfigError);
}

TEST_CASE("text form reloads to the same values") {
  Config a;
  a.set("study.d_values", "0,0.5");
  a.set("run.seed", "77");
  const auto p = write_cfg("roundtrip", a.to_text());
  Config b;
  b.merge_file(p);
  CHECK(b.values() == a.values());
  fs::remove(p);
}
