#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "remembra/config.hpp"
#include "remembra/runner.hpp"

using namespace remembra;

TEST_CASE("kv parser handles comments, blanks and reports line numbers") {
  auto kv = config::parse_kv_text("# comment\n\nfoo = 1\nbar = hello world  # trailing\n", "test");
  CHECK(kv.at("foo") == "1");
  CHECK(kv.at("bar") == "hello world");

  CHECK_THROWS_WITH_AS(config::parse_kv_text("a = 1\nnot a pair\n", "cfg"),
                       doctest::Contains("cfg:2"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(config::parse_kv_text("x = 1\nx = 2\n", "cfg"),
                       doctest::Contains("duplicate"), std::invalid_argument);
}

TEST_CASE("resolve applies defaults, file keys and CLI overrides in order") {
  auto file = config::parse_kv_text("episode.count = 42\nseeds = 3\nmethods = sgd,lwf\n", "f");
  std::map<std::string, std::string> cli{{"seeds", "7,9"}};
  auto cfg = config::resolve(file, cli);
  CHECK(cfg.episode.episodes == 42);
  CHECK(cfg.seeds == std::vector<uint64_t>{7, 9});
  REQUIRE(cfg.methods.size() == 2);
  CHECK(cfg.methods[0] == engine::Method::sgd);
  CHECK(cfg.methods[1] == engine::Method::lwf);
  // seeds = n expands to 1..n
  auto cfg2 = config::resolve(config::parse_kv_text("seeds = 3\n", "f"), {});
  CHECK(cfg2.seeds == std::vector<uint64_t>{1, 2, 3});
}

TEST_CASE("unknown keys, methods and experiments are rejected by name") {
  CHECK_THROWS_WITH_AS(config::resolve(config::parse_kv_text("tpyo = 1\n", "f"), {}),
                       doctest::Contains("tpyo"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(config::resolve(config::parse_kv_text("methods = sgd,unknown\n", "f"), {}),
                       doctest::Contains("unknown"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(config::resolve({}, {{"experiment", "bogus"}}),
                       doctest::Contains("bogus"), std::invalid_argument);
}

TEST_CASE("three-task experiment enables the task-switch rule") {
  auto cfg = config::resolve({}, {{"experiment", "three-task"}});
  CHECK(cfg.episode.switch_task_on_threshold);
  auto cfg2 = config::resolve({}, {{"experiment", "seq-transfer"}});
  CHECK_FALSE(cfg2.episode.switch_task_on_threshold);
}

TEST_CASE("dump emits every documented key and round-trips through the parser") {
  config::ExperimentConfig cfg;
  auto kv = config::parse_kv_text(cfg.dump(), "dump");
  auto back = config::resolve(kv, {});
  CHECK(back.dump() == cfg.dump());
}

TEST_CASE("compare_table aggregates final-step accuracies with fixed row order") {
  std::vector<std::vector<probe::ProbeResult>> runs(2);
  for (uint64_t s = 0; s < 2; ++s) {
    for (const char* m : {"sgd", "meta"}) {
      for (int task = 0; task < 2; ++task) {
        for (int step : {0, 50, 100}) {
          probe::ProbeResult r;
          r.method = m;
          r.seed = s;
          r.task = task;
          r.step = step;
          r.readout_accuracy = 0.5 + 0.1 * static_cast<double>(s) + (m[0] == 'm' ? 0.2 : 0.0);
          runs[s].push_back(r);
        }
      }
    }
  }
  auto rows = runner::compare_table(runs);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].method == "meta");  // meta sorts before sgd in the fixed order
  CHECK(rows[0].step == 100);
  CHECK(rows[0].mean == doctest::Approx(0.75));
  CHECK(rows[2].method == "sgd");
  CHECK(rows[2].mean == doctest::Approx(0.55));
  CHECK(rows[2].stddev == doctest::Approx(std::sqrt(0.005)));

  // single run -> zero std
  auto single = runner::compare_table({runs[0]});
  CHECK(single[0].stddev == 0.0);

  // mismatched step grids are rejected
  runs[1].push_back({"sgd", 1, 0, 200, 0.9, 0.1});
  CHECK_THROWS_WITH_AS(runner::compare_table(runs), doctest::Contains("step grids"),
                       std::invalid_argument);
}

TEST_CASE("dry run prints the resolved config without side effects") {
  config::ExperimentConfig cfg;
  cfg.dry_run = true;
  cfg.out_dir = "/tmp/remembra_should_not_exist";
  std::remove("/tmp/remembra_should_not_exist");
  CHECK(runner::run(cfg) == 0);
  std::ifstream f("/tmp/remembra_should_not_exist/config_resolved.txt");
  CHECK_FALSE(f.good());
}
