#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sysid/matrix.hpp"

namespace fs = std::filesystem;

namespace {

std::string binary() {
  const char* env = std::getenv("STABLE_SYSID_BIN");
  REQUIRE(env != nullptr);
  return env;
}

struct CmdResult {
  int code = -1;
  std::string output;
};

CmdResult run_cmd(const std::string& cmd) {
  CmdResult res;
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof(buf), pipe)) res.output.append(buf, got);
  const int rc = pclose(pipe);
  res.code = WEXITSTATUS(rc);
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct WorkDir {
  fs::path path;
  WorkDir() {
    path = fs::path("cli_work_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~WorkDir() { fs::remove_all(path); }
  std::string s(const std::string& rel) const { return (path / rel).string(); }
  static int counter;
};
int WorkDir::counter = 0;

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("generate writes the dataset files and respects exit codes") {
  WorkDir wd;
  auto ok = run_cmd(binary() + " generate --n 3 --m 2 --p 2 --length 60 --seed 4 --out " +
                    wd.s("data"));
  REQUIRE(ok.code == 0);
  REQUIRE(fs::exists(wd.path / "data" / "train.csv"));
  REQUIRE(fs::exists(wd.path / "data" / "val.csv"));
  REQUIRE(fs::exists(wd.path / "data" / "test.csv"));
  REQUIRE(fs::exists(wd.path / "data" / "truth.json"));
  REQUIRE(fs::exists(wd.path / "data" / "manifest.json"));

  auto missing = run_cmd(binary() + " generate --m 2 --p 2");
  REQUIRE(missing.code == 2);

  auto badval = run_cmd(binary() + " generate --n 3 --m 2 --p 2 --rho 1.5 --out " + wd.s("x"));
  REQUIRE(badval.code == 2);
}

TEST_CASE("fit is byte-deterministic and honors masks") {
  WorkDir wd;
  REQUIRE(run_cmd(binary() + " generate --n 2 --m 1 --p 2 --length 50 --seed 9 --out " +
                  wd.s("data"))
              .code == 0);
  nlohmann::json cfg = {
      {"n", 2},
      {"train_data", wd.s("data/train.csv")},
      {"val_data", wd.s("data/val.csv")},
      {"test_data", wd.s("data/test.csv")},
      {"stable_A", true},
      {"naive_A", true},
      {"mask_A", {{1, 0}, {1, 1}}},
      {"mask_B", {{1}, {0}}},
      {"max_epochs", 25},
      {"batch_size", 1},
      {"seed", 11},
  };
  write_file(wd.path / "cfg.json", cfg.dump());

  auto r1 = run_cmd(binary() + " fit --config " + wd.s("cfg.json") + " --output-dir " +
                    wd.s("run1"));
  INFO(r1.output);
  REQUIRE(r1.code == 0);
  REQUIRE(r1.output.find("best epoch") != std::string::npos);
  auto r2 = run_cmd(binary() + " fit --config " + wd.s("cfg.json") + " --output-dir " +
                    wd.s("run2"));
  REQUIRE(r2.code == 0);

  REQUIRE(slurp(wd.path / "run1" / "model.json") == slurp(wd.path / "run2" / "model.json"));
  REQUIRE(slurp(wd.path / "run1" / "history.csv") == slurp(wd.path / "run2" / "history.csv"));
  REQUIRE(slurp(wd.path / "run1" / "metrics.json") == slurp(wd.path / "run2" / "metrics.json"));

  // masked entries of the saved effective matrices are exactly zero
  auto model = nlohmann::json::parse(slurp(wd.path / "run1" / "model.json"));
  auto a_eff = model.at("A_effective").at("data").get<std::vector<double>>();
  REQUIRE(a_eff[1] == 0.0);  // (0,1) masked
  auto b_mask = model.at("mask_B").at("data").get<std::vector<double>>();
  REQUIRE(b_mask[1] == 0.0);

  // a different seed changes the artifacts
  auto r3 = run_cmd(binary() + " fit --config " + wd.s("cfg.json") + " --seed 12 --output-dir " +
                    wd.s("run3"));
  REQUIRE(r3.code == 0);
  REQUIRE(slurp(wd.path / "run1" / "model.json") != slurp(wd.path / "run3" / "model.json"));
}

TEST_CASE("eval and inspect consume a saved model") {
  WorkDir wd;
  REQUIRE(run_cmd(binary() + " generate --n 2 --m 1 --p 1 --length 40 --seed 2 --out " +
                  wd.s("data"))
              .code == 0);
  nlohmann::json cfg = {
      {"n", 2},
      {"train_data", wd.s("data/train.csv")},
      {"val_data", wd.s("data/val.csv")},
      {"test_data", wd.s("data/test.csv")},
      {"max_epochs", 10},
      {"batch_size", 1},
      {"seed", 5},
  };
  write_file(wd.path / "cfg.json", cfg.dump());
  auto fit = run_cmd(binary() + " fit --config " + wd.s("cfg.json") + " --output-dir " +
                     wd.s("run"));
  REQUIRE(fit.code == 0);

  auto ev = run_cmd(binary() + " eval --model " + wd.s("run/model.json") + " --data " +
                    wd.s("data/test.csv"));
  REQUIRE(ev.code == 0);
  auto ev_json = nlohmann::json::parse(ev.output);
  auto metrics = nlohmann::json::parse(slurp(wd.path / "run" / "metrics.json"));
  REQUIRE(ev_json.at("mean").get<double>() == metrics.at("test_loss").get<double>());

  auto insp = run_cmd(binary() + " inspect --model " + wd.s("run/model.json"));
  REQUIRE(insp.code == 0);
  REQUIRE(insp.output.find("spectral radius") != std::string::npos);
  REQUIRE(insp.output.find("eigenvalues of A") != std::string::npos);
}

TEST_CASE("config and data errors exit with code 2") {
  WorkDir wd;
  write_file(wd.path / "bad.json", R"({"n": 2, "unknown_key": 1})");
  auto bad = run_cmd(binary() + " fit --config " + wd.s("bad.json"));
  REQUIRE(bad.code == 2);
  REQUIRE(bad.output.find("unknown_key") != std::string::npos);

  write_file(wd.path / "ok.json",
             R"({"n": 2, "train_data": ")" + wd.s("nope.csv") + R"(", "val_data": "x"})");
  REQUIRE(run_cmd(binary() + " fit --config " + wd.s("ok.json")).code == 2);

  write_file(wd.path / "data.csv", "traj_id,step,u_0,y_0\na,0,NaN,1\n");
  nlohmann::json cfg = {{"n", 1},
                        {"train_data", wd.s("data.csv")},
                        {"val_data", wd.s("data.csv")}};
  write_file(wd.path / "cfg.json", cfg.dump());
  auto nan_input = run_cmd(binary() + " fit --config " + wd.s("cfg.json"));
  REQUIRE(nan_input.code == 2);
  REQUIRE(nan_input.output.find("line 2") != std::string::npos);
}

TEST_CASE("bench runs a sweep, aggregates, and resumes without recomputation") {
  WorkDir wd;
  nlohmann::json sweep = {
      {"base",
       {{"n", 2},
        {"input_output", false},
        {"max_epochs", 15},
        {"batch_size", 8},
        {"horizon", 5},
        {"stride", 2}}},
      {"systems",
       {{{"n", 2}, {"m", 1}, {"p", 1}, {"length", 60}, {"noise_std", 0.1}, {"seed", 31},
         {"state_targets", true}},
        {{"n", 2}, {"m", 1}, {"p", 1}, {"length", 60}, {"noise_std", 0.1}, {"seed", 32},
         {"state_targets", true}}}},
      {"methods",
       {{{"name", "ls"}},
        {{"name", "generic"},
         {"overrides", {{"stable_A", true}, {"LMI_A", true}}}}}},
      {"seeds", {0}},
  };
  write_file(wd.path / "sweep.json", sweep.dump());
  auto r1 = run_cmd(binary() + " bench --sweep " + wd.s("sweep.json") + " --out " + wd.s("out") +
                    " --jobs 2");
  INFO(r1.output);
  REQUIRE(r1.code == 0);
  REQUIRE(r1.output.find("4 cells executed") != std::string::npos);

  const std::string comparison = slurp(wd.path / "out" / "comparison.csv");
  // header + 2 systems x 2 methods
  REQUIRE(std::count(comparison.begin(), comparison.end(), '\n') == 5);
  REQUIRE(comparison.find("s0,ls,") != std::string::npos);
  REQUIRE(comparison.find("s1,generic,") != std::string::npos);
  REQUIRE(fs::exists(wd.path / "out" / "quantiles.csv"));
  const std::string manifest1 = slurp(wd.path / "out" / "results_manifest.json");

  // resume: nothing to recompute, manifest unchanged
  auto r2 = run_cmd(binary() + " bench --sweep " + wd.s("sweep.json") + " --out " + wd.s("out"));
  REQUIRE(r2.code == 0);
  REQUIRE(r2.output.find("0 cells executed") != std::string::npos);
  REQUIRE(slurp(wd.path / "out" / "results_manifest.json") == manifest1);
}

TEST_CASE("STABLE_SYSID_SEED is the seed fallback") {
  WorkDir wd;
  auto r1 = run_cmd("STABLE_SYSID_SEED=77 " + binary() +
                    " generate --n 2 --m 1 --p 1 --length 30 --out " + wd.s("a"));
  REQUIRE(r1.code == 0);
  auto r2 = run_cmd(binary() + " generate --n 2 --m 1 --p 1 --length 30 --seed 77 --out " +
                    wd.s("b"));
  REQUIRE(r2.code == 0);
  REQUIRE(slurp(wd.path / "a" / "train.csv") == slurp(wd.path / "b" / "train.csv"));
}
