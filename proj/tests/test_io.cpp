#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "brwlab/env_io.hpp"
#include "brwlab/report_io.hpp"

using namespace brwlab;
using nlohmann::json;

TEST_CASE("environment json round trip") {
  auto env = envs::two_state_diff_step();
  auto j = environment_to_json(env);
  auto back = environment_from_json(j);
  REQUIRE(back.states.size() == env.states.size());
  CHECK(back.lattice_step == env.lattice_step);
  for (std::size_t s = 0; s < env.states.size(); ++s) {
    CHECK(back.states[s].first == env.states[s].first);
    REQUIRE(back.states[s].second.outcomes.size() == env.states[s].second.outcomes.size());
    for (std::size_t o = 0; o < env.states[s].second.outcomes.size(); ++o) {
      CHECK(back.states[s].second.outcomes[o].prob == env.states[s].second.outcomes[o].prob);
      CHECK(back.states[s].second.outcomes[o].children ==
            env.states[s].second.outcomes[o].children);
    }
  }
}

TEST_CASE("tail descriptors survive the round trip") {
  auto env = envs::tail_polylog(3.0);
  auto back = environment_from_json(environment_to_json(env));
  REQUIRE(back.states[0].second.tail.has_value());
  CHECK(back.states[0].second.tail->gamma == 3.0);
  CHECK(boundary_check(back, 1e-9).pass);
}

TEST_CASE("unknown keys are rejected at every level") {
  auto j = environment_to_json(envs::homogeneous_pm1());
  auto j1 = j;
  j1["extra"] = 1;
  REQUIRE_THROWS_AS(environment_from_json(j1), Error);
  auto j2 = j;
  j2["states"][0]["typo"] = 1;
  REQUIRE_THROWS_AS(environment_from_json(j2), Error);
  auto j3 = j;
  j3["states"][0]["outcomes"][0]["weight"] = 1;
  REQUIRE_THROWS_AS(environment_from_json(j3), Error);
}

TEST_CASE("missing required fields are rejected") {
  json j{{"states", json::array()}};
  REQUIRE_THROWS_AS(environment_from_json(j), Error);
}

TEST_CASE("csv quoting follows rfc 4180") {
  CsvWriter csv({"a", "b"});
  csv.row(std::string("plain"), std::string("with,comma"));
  csv.row(std::string("has \"quote\""), std::string("line\nbreak"));
  const std::string& s = csv.str();
  CHECK(s.find("\"with,comma\"") != std::string::npos);
  CHECK(s.find("\"has \"\"quote\"\"\"") != std::string::npos);
  CHECK(s.find("\"line\nbreak\"") != std::string::npos);
  CHECK(s.substr(0, 5) == "a,b\r\n");
}

TEST_CASE("fnv-1a matches the reference vector") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hash_hex(fnv1a64("")) == "cbf29ce484222325");
}

TEST_CASE("parallel map is deterministic and ordered") {
  auto serial = parallel_map<double>(64, 1, [](std::size_t i) { return double(i) * 1.5; });
  auto parallel = parallel_map<double>(64, 8, [](std::size_t i) { return double(i) * 1.5; });
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i] == parallel[i]);
    CHECK(serial[i] == double(i) * 1.5);
  }
}

TEST_CASE("environment file load/save") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "brwlab_env_test.json").string();
  save_environment(envs::homogeneous_pm1(), path);
  auto env = load_environment(path);
  CHECK(boundary_check(env, 1e-11).pass);
  std::remove(path.c_str());
  REQUIRE_THROWS_AS(load_environment(path), Error);
}
