#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "sanet/image.hpp"
#include "sanet/io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "sanet_cli_test";

int run(const std::string& args) {
  const std::string cmd = "cd '" + kWork.string() + "' && '" SANET_CLI "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    sanet::write_file(kWork / "fast.json", R"({"training": {"iterations": 40}, "synth_length": 12})");
  }
  ~Workspace() { fs::remove_all(kWork); }
};

}  // namespace

TEST_CASE("usage and exit codes") {
  Workspace w;
  CHECK(run("--help") == 0);
  CHECK(run("demo --help") == 0);
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("demo --no-such-flag") == 1);
  CHECK(run("track") == 1);
  CHECK(run("demo --seed notanumber") == 1);
  sanet::write_file(kWork / "bad.json", R"({"trainig": {}})");
  CHECK(run("demo --config bad.json --out x") == 2);
  sanet::write_file(kWork / "empty.ckpt", "");
  CHECK(run("synth --out s --config fast.json") == 0);
  CHECK(run("track s --checkpoint empty.ckpt --out t") == 2);
}

TEST_CASE("synth, train, track and eval write their artifacts") {
  Workspace w;
  REQUIRE(run("synth --seed 3 --config fast.json --out scene") == 0);
  CHECK(fs::exists(kWork / "scene" / "img" / "0001.ppm"));
  CHECK(fs::exists(kWork / "scene" / "groundtruth_rect.txt"));
  REQUIRE(run("train --seed 3 --config fast.json --out model") == 0);
  CHECK(fs::exists(kWork / "model" / "train_log.csv"));
  REQUIRE(run("track scene --checkpoint model/net.ckpt --seed 3 --config fast.json --out trk") == 0);
  REQUIRE(run("eval scene --trajectory trk/trajectory.csv --config fast.json --out ev") == 0);
  const auto report = nlohmann::json::parse(sanet::read_file(kWork / "ev" / "metrics.json"));
  CHECK(report["frames"] == 12);
  CHECK(report["success"]["curve"].size() == 21);
  for (const char* dir : {"scene", "model", "trk", "ev"}) {
    const auto j = nlohmann::json::parse(sanet::read_file(kWork / dir / "run.json"));
    CHECK(j["config_hash"] == sanet::config_hash(sanet::load_run_config(kWork / "fast.json")));
    CHECK(j["versions"]["sanet"] == sanet::kVersion);
  }
  REQUIRE(run("train --seed 3 --config fast.json --ablate-rnn --out plain") == 0);
  CHECK(sanet::load_checkpoint(kWork / "plain" / "net.ckpt").net.config.stages[0].fuse == false);
}

TEST_CASE("demo with a fixed seed is reproducible") {
  Workspace w;
  REQUIRE(run("demo --seed 7 --out a") == 0);
  REQUIRE(run("demo --seed 7 --out b") == 0);
  for (const char* f : {"trajectory.csv", "trajectory.json", "metrics.json", "net.ckpt", "train_log.csv"}) {
    CAPTURE(f);
    CHECK(sanet::read_file(kWork / "a" / f) == sanet::read_file(kWork / "b" / f));
  }
  const auto j = nlohmann::json::parse(sanet::read_file(kWork / "a" / "run.json"));
  CHECK(j["seed"] == 7);
  CHECK(j["command"] == "demo");
}
