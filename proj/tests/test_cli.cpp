#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "una/control.hpp"
#include "una/testbed.hpp"

using namespace una;

namespace {

const std::filesystem::path kRoot = UNA_SOURCE_DIR;

struct Result {
  int code = -1;
  std::string out;
};

Result una_cli(const std::string& args) {
  const std::string cmd = std::string(UNA_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Json json_of(const Result& r) {
  const auto start = r.out.find('{');
  REQUIRE(start != std::string::npos);
  return Json::parse(r.out.substr(start));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string path(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("vision on a golden frame prints the recorded detections") {
  const auto dir = kRoot / "tests/golden/trio";
  const auto r = una_cli("vision --frame " + path(dir / "frame.ppm") + " --cal " + path(dir / "calibration.yaml"));
  CHECK(r.code == 0);
  std::ifstream expected(dir / "expected.json");
  CHECK(json_of(r) == Json::parse(expected));
}

TEST_CASE("cover on the zero-target instance keeps every drone where it is") {
  const auto r = una_cli("cover --instance " + path(kRoot / "scenarios/cover_zero_targets.yaml"));
  CHECK(r.code == 0);
  const auto j = json_of(r);
  CHECK(j["covered_count"] == 0);
  CHECK(j["assignments"]["d1"] == Json{{"x", 0.2}, {"y", 1.9}, {"yaw", 0.0}});
  CHECK(j["assignments"]["d2"] == Json{{"x", 1.0}, {"y", 0.3}, {"yaw", 1.5}});
}

TEST_CASE("cover agrees with the exhaustive solver on the bundled instance") {
  const auto greedy = json_of(una_cli("cover --instance " + path(kRoot / "scenarios/cover_four_targets.yaml")));
  const auto best = json_of(una_cli("cover --mode exhaustive --instance " + path(kRoot / "scenarios/cover_four_targets.yaml")));
  CHECK(greedy["covered_count"] == 4);
  CHECK(best["covered_count"] == 4);
}

TEST_CASE("mesh on the chain script routes along the BFS path") {
  const auto r = una_cli("mesh " + path(kRoot / "scenarios/mesh_chain.yaml"));
  REQUIRE(r.code == 0);
  const auto j = json_of(r);

  const std::vector<std::pair<double, double>> pos{{0.0, 0.0}, {0.8, 0.0}, {1.6, 0.0}};
  std::vector<std::vector<bool>> adj(3, std::vector<bool>(3, false));
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      adj[a][b] = a != b && std::hypot(pos[a].first - pos[b].first, pos[a].second - pos[b].second) <= 1.0;
  const auto dist = oracle::bfs(adj, 0);

  REQUIRE(j["discoveries"].size() == 1);
  const auto& d = j["discoveries"][0];
  CHECK(d["status"] == "found");
  CHECK(d["hops"] == dist[2]);
  CHECK(d["path"] == Json::array({0, 1, 2}));
  REQUIRE(j["data"].size() == 3);
  CHECK(j["data"][0]["status"] == "delivered");
  CHECK(j["data"][0]["hops"] == dist[2]);
  CHECK(j["data"][1]["status"] == "delivered");
  CHECK(j["data"][2]["status"] == "failed");
}

TEST_CASE("bench-placement rejects zero trials and bounds a noise-free trial") {
  const auto zero = una_cli("bench-placement --trials 0");
  CHECK(zero.code == 2);
  CHECK(zero.out.find("--trials") != std::string::npos);

  const auto dir = std::filesystem::temp_directory_path() / "una_cli_bench";
  std::filesystem::remove_all(dir);
  const auto one = una_cli("bench-placement --trials 1 --noise 0 --out " + path(dir));
  CHECK(one.code == 0);
  const auto rec = Json::parse(slurp(dir / "benchmark.json"));
  REQUIRE(rec["trials"].size() == 1);
  const ArenaConfig arena;
  CHECK(rec["trials"][0]["error_m"].get<double>() <= Tolerances{}.position + arena.meters_per_pixel_x());
  CHECK(slurp(dir / "benchmark.csv").rfind("trial,error_m\n0,", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("run rejects an invalid scenario naming the drone") {
  const auto r = una_cli("run --scenario " + path(kRoot / "tests/data/bad_start.yaml"));
  CHECK(r.code == 2);
  CHECK(r.out.find("bad_start.yaml:5: drone 'd2' starts outside the arena") != std::string::npos);
}

TEST_CASE("run with the same seed twice writes identical artifacts") {
  const auto dir = std::filesystem::temp_directory_path() / "una_cli_run";
  std::filesystem::remove_all(dir);
  for (const char* sub : {"a", "b"}) {
    const auto r = una_cli("run --scenario " + path(kRoot / "scenarios/pair_distributed.yaml") +
                           " --seed 7 --ticks 400 --out " + path(dir / sub));
    CHECK(r.code == 0);
  }
  for (const char* f : {"summary.json", "control_trace.csv", "packet_trace.csv", "coverage.csv", "control_log.csv"}) {
    CAPTURE(f);
    const auto a = slurp(dir / "a" / f);
    CHECK(!a.empty());
    CHECK(a == slurp(dir / "b" / f));
  }
  CHECK(Json::parse(slurp(dir / "a/summary.json"))["seed"] == 7);
  std::filesystem::remove_all(dir);
}

TEST_CASE("unknown subcommands are usage errors") {
  CHECK(una_cli("fly").code == 2);
  CHECK(una_cli("").code == 2);
}
