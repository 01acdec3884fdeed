#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "banditab/cli.hpp"

using namespace banditab;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = BANDITAB_TEST_TMP;

const char* kSmallConfig = R"(users = 200
topics = 8
phase1_days = 4
phase2_days = 3
mc_samples = 32
activity_log_mean = -1.0
group_fractions = [0.5, 0.25, 0.25]
)";

fs::path fresh_dir(const std::string& name) {
  const fs::path p = kTmp / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.toml";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Invocation {
  int code;
  std::string err;
};

Invocation run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "banditab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), err);
  return {code, err.str()};
}

nlohmann::json manifest_without_clock(const fs::path& dir) {
  auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
  j.erase("wall_clock_seconds");
  return j;
}

}  // namespace

TEST_CASE("simulate writes the documented artifacts") {
  const fs::path dir = fresh_dir("simulate");
  const fs::path cfg = write_config(dir, kSmallConfig);
  const auto r = run_cli({"simulate", "--config", cfg.string(), "--seed", "7", "--out",
                          (dir / "a").string(), "--quiet"});
  REQUIRE(r.code == 0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["versions"]["banditab"] == cli::kVersion);
  CHECK(manifest["wall_clock_seconds"].get<double>() >= 0.0);
  for (const auto& f : manifest["files"]) {
    const fs::path p = dir / "a" / f.get<std::string>();
    CHECK(fs::exists(p));
    CHECK(fs::file_size(p) > 0);
  }
  for (const char* f : {"impressions.jsonl", "metrics.csv", "effects.csv", "manifest.json"})
    CHECK(fs::exists(dir / "a" / f));

  // Every artifact parses.
  std::ifstream log(dir / "a" / "impressions.jsonl");
  const auto records = read_impressions(log, LogBounds{8, 200});
  CHECK_FALSE(records.empty());
  CHECK(slurp(dir / "a" / "metrics.csv").rfind("day,group,phase,metric,value\n", 0) == 0);
  CHECK(slurp(dir / "a" / "effects.csv").rfind("day,phase,metric,value\n", 0) == 0);
  CHECK(slurp(dir / "a" / "buckets.csv").rfind("bucket,metric,value,users\n", 0) == 0);

  // The manifest's config snapshot reproduces the run.
  ExperimentConfig snap = parse_config(manifest["config"].get<std::string>());
  CHECK(snap.seed == 7);
  CHECK(snap.users == 200);

  SUBCASE("same seed: identical manifests and artifacts") {
    REQUIRE(run_cli({"simulate", "--config", cfg.string(), "--seed", "7", "--out",
                     (dir / "b").string(), "--quiet"})
                .code == 0);
    CHECK(manifest_without_clock(dir / "a") == manifest_without_clock(dir / "b"));
    for (const char* f : {"impressions.jsonl", "metrics.csv", "effects.csv", "buckets.csv"})
      CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  SUBCASE("metrics recomputes byte-identical tables") {
    REQUIRE(run_cli({"metrics", "--log", (dir / "a" / "impressions.jsonl").string(), "--config",
                     cfg.string(), "--seed", "7", "--out", (dir / "m").string(), "--quiet"})
                .code == 0);
    for (const char* f : {"metrics.csv", "effects.csv", "buckets.csv"})
      CHECK(slurp(dir / "a" / f) == slurp(dir / "m" / f));
    // And again: nothing changes.
    REQUIRE(run_cli({"metrics", "--log", (dir / "a" / "impressions.jsonl").string(), "--config",
                     cfg.string(), "--seed", "7", "--out", (dir / "m").string(), "--quiet"})
                .code == 0);
    CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "m" / "metrics.csv"));
  }
  SUBCASE("report concatenates runs") {
    REQUIRE(run_cli({"report", (dir / "a").string(), "--out", (dir / "report.csv").string(),
                     "--quiet"})
                .code == 0);
    const std::string text = slurp(dir / "report.csv");
    CHECK(text.rfind("run,day,group,phase,metric,value\n", 0) == 0);
    CHECK(text.find("\na,0,control,1,plays,") != std::string::npos);
  }
}

TEST_CASE("simulate with the default config and a seed override") {
  // Shrunk through --config only in size; every other field is a default.
  const fs::path dir = fresh_dir("defaults");
  const fs::path cfg = write_config(dir, "users = 100\nphase1_days = 2\nphase2_days = 1\n");
  REQUIRE(run_cli({"simulate", "--config", cfg.string(), "--out", (dir / "run").string(),
                   "--quiet"})
              .code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "run" / "manifest.json"))["seed"] == 42);
}

TEST_CASE("config and usage errors exit with status 2") {
  const fs::path dir = fresh_dir("errors");
  const fs::path bad = write_config(dir, "gamma = -3\n");
  auto r = run_cli({"simulate", "--config", bad.string(), "--out", (dir / "x").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("gamma") != std::string::npos);

  r = run_cli({"simulate", "--config", (dir / "missing.toml").string(), "--out",
               (dir / "x").string()});
  CHECK(r.code == 2);

  r = run_cli({"simulate"});
  CHECK(r.code == 2);
  r = run_cli({"frobnicate"});
  CHECK(r.code == 2);
  r = run_cli({"simulate", "--out", (dir / "x").string(), "--seed", "minus-one"});
  CHECK(r.code == 2);
}

TEST_CASE("metrics on bad or empty logs") {
  const fs::path dir = fresh_dir("metrics_edge");
  const fs::path cfg = write_config(dir, kSmallConfig);

  std::ofstream(dir / "empty.jsonl").close();
  REQUIRE(run_cli({"metrics", "--log", (dir / "empty.jsonl").string(), "--config", cfg.string(),
                   "--out", (dir / "e").string(), "--quiet"})
              .code == 0);
  CHECK(slurp(dir / "e" / "metrics.csv") == "day,group,phase,metric,value\n");
  CHECK(slurp(dir / "e" / "effects.csv") == "day,phase,metric,value\n");
  CHECK(slurp(dir / "e" / "buckets.csv") == "bucket,metric,value,users\n");

  std::ofstream(dir / "bad.jsonl")
      << R"({"day":0,"user":0,"topic":99,"group":"test","phase":1,"outcomes":{"play":false,)"
         R"("loop":false,"skip":false,"comment":false,"share":false,"like":false,)"
         R"("completed":false},"score":1.0})"
      << "\n";
  auto r = run_cli({"metrics", "--log", (dir / "bad.jsonl").string(), "--config", cfg.string(),
                    "--out", (dir / "b").string(), "--quiet"});
  CHECK(r.code == 1);
  CHECK(r.err.find("topic") != std::string::npos);

  r = run_cli({"metrics", "--log", (dir / "nope.jsonl").string(), "--out", (dir / "c").string()});
  CHECK(r.code == 1);
}

TEST_CASE("sweep runs the full grid") {
  const fs::path dir = fresh_dir("sweep");
  const fs::path cfg = write_config(dir, kSmallConfig);
  const auto r = run_cli({"sweep", "--config", cfg.string(), "--param", "gamma", "--values",
                          "0,1,2", "--seeds", "1,2,3", "--out", (dir / "grid").string(),
                          "--quiet"});
  REQUIRE(r.code == 0);
  int manifests = 0;
  for (const auto& e : fs::directory_iterator(dir / "grid"))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) ++manifests;
  CHECK(manifests == 9);

  std::istringstream csv(slurp(dir / "grid" / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "param,value,seed,metric,phase,value");
  int rows = 0;
  int zero_gamma_n = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(line.rfind("gamma,", 0) == 0);
    if (line.rfind("gamma,0,", 0) == 0 && line.find(",plays,") != std::string::npos)
      ++zero_gamma_n;
  }
  CHECK(rows > 9);
  REQUIRE(zero_gamma_n == 6);  // 3 seeds x 2 phases

  // Report over a sweep directory picks up every run.
  REQUIRE(run_cli({"report", (dir / "grid").string(), "--out", (dir / "all.csv").string(),
                   "--quiet"})
              .code == 0);
  const std::string all = slurp(dir / "all.csv");
  CHECK(all.find("gamma=2_seed=3,") != std::string::npos);
  CHECK(all.find("gamma=0_seed=1,") != std::string::npos);
}

TEST_CASE("sweep rejects unknown or fixed parameters") {
  const fs::path dir = fresh_dir("sweep_bad");
  CHECK(run_cli({"sweep", "--param", "colour", "--values", "1", "--seeds", "1", "--out",
                 dir.string(), "--quiet"})
            .code == 2);
  CHECK(run_cli({"sweep", "--param", "users", "--values", "10", "--seeds", "1", "--out",
                 dir.string(), "--quiet"})
            .code == 2);
  CHECK(run_cli({"sweep", "--param", "gamma", "--values", "-1", "--seeds", "1", "--out",
                 dir.string(), "--quiet"})
            .code == 2);
  CHECK(run_cli({"sweep", "--param", "gamma", "--values", "", "--seeds", "1", "--out",
                 dir.string(), "--quiet"})
            .code == 2);
}
