#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "igroup/apps/csv.hpp"

namespace {

namespace fs = std::filesystem;
const std::string kCli = IGROUP_CLI_PATH;
const std::string kFixtures = IGROUP_FIXTURE_DIR;

struct Run {
  int code = -1;
  std::string err;
};

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("igroup_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Run run(const std::string& args) {
  const auto err = scratch("stderr.txt");
  fs::create_directories(err.parent_path());
  const std::string cmd = kCli + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

nlohmann::json last_line_json(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  auto start = text.rfind('\n', end);
  return nlohmann::json::parse(text.substr(start == std::string::npos ? 0 : start + 1, end - start));
}

void expect_same_outputs(const fs::path& a, const fs::path& b) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
  std::set<std::string> other;
  for (const auto& e : fs::directory_iterator(b)) other.insert(e.path().filename().string());
  EXPECT_EQ(names, other);
  for (const auto& n : names) {
    if (n == "manifest.json") continue;
    EXPECT_EQ(slurp(a / n), slurp(b / n)) << n;
  }
}

void expect_manifest_complete(const fs::path& dir) {
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  std::set<std::string> listed;
  for (const auto& f : m["files"]) listed.insert(f.get<std::string>());
  std::set<std::string> present;
  for (const auto& e : fs::directory_iterator(dir)) present.insert(e.path().filename().string());
  EXPECT_EQ(listed, present);
  EXPECT_EQ(m["files"].back(), "manifest.json");
  EXPECT_TRUE(m.contains("config"));
  EXPECT_TRUE(m.contains("seed"));
  EXPECT_TRUE(m.contains("version"));
  EXPECT_TRUE(m.contains("wall_seconds"));
}

TEST(Cli, VersionAndUsage) {
  EXPECT_EQ(run("--version").code, 0);
  const auto unknown = run("frobnicate --out x");
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);
  const auto missing = run("simulate case3 --row 1");
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("Usage"), std::string::npos);
  EXPECT_EQ(last_line_json(missing.err)["error"], "configuration");
}

TEST(Cli, SimulateCase3Smoke) {
  const auto out = scratch("case3");
  const auto r = run("simulate case3 --row 1 --seed 7 --replications 1 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "report.csv"));
  EXPECT_TRUE(fs::exists(out / "curves.csv"));
  const auto meta = nlohmann::json::parse(slurp(out / "meta.json"));
  EXPECT_EQ(meta["config"]["seed"], 7);
  EXPECT_EQ(meta["config"]["row"], 1);
  EXPECT_FALSE(meta["config"].contains("threads"));
  expect_manifest_complete(out);
}

TEST(Cli, ConfigFilePrecedence) {
  const auto dir = scratch("precedence");
  fs::create_directories(dir);
  std::ofstream(dir / "c.cfg") << "K = 64\nreplications = 3\nseed = 5\n";
  const auto out = dir / "out";
  ASSERT_EQ(run("simulate case1 --config " + (dir / "c.cfg").string() + " --seed 9 --out " + out.string()).code, 0);
  const auto meta = nlohmann::json::parse(slurp(out / "meta.json"));
  EXPECT_EQ(meta["config"]["K"], 64);
  EXPECT_EQ(meta["config"]["replications"], 3);
  EXPECT_EQ(meta["config"]["seed"], 9);
  EXPECT_EQ(meta["config"]["tau"], 1.0);

  std::ofstream(dir / "bad.cfg") << "bogus_key = 1\n";
  const auto bad = run("simulate case1 --config " + (dir / "bad.cfg").string() + " --out " + out.string());
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(last_line_json(bad.err)["error"], "configuration");
}

TEST(Cli, VoyagesUnderNeighborFloorExitTwo) {
  const auto r = run("anomaly --voyages " + kFixtures + "/voyages_10.csv --k 40 --out " + scratch("a10").string());
  EXPECT_EQ(r.code, 2);
  const auto j = last_line_json(r.err);
  EXPECT_EQ(j["error"], "insufficient_data");
  EXPECT_EQ(j["exit"], 2);
}

TEST(Cli, SchemaErrorExitOne) {
  const auto r = run("var --returns " + kFixtures + "/returns_header_only.csv --factors " + kFixtures +
                     "/factors_2x2.csv --out " + scratch("v").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(last_line_json(r.err)["error"], "schema");
}

TEST(Cli, WeightsDumpEqualCovariates) {
  const auto out = scratch("w_equal");
  ASSERT_EQ(run("weights-dump --population " + kFixtures + "/population_equal_z.csv --target b --scheme z --out " +
                out.string())
                .code,
            0);
  const auto t = igroup::csv::parse(slurp(out / "weights.csv"));
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.header, (std::vector<std::string>{"id", "w1", "w2", "product"}));
  for (const auto& row : t.rows) {
    EXPECT_EQ(row[1], t.rows[0][1]);
    EXPECT_EQ(row[3], t.rows[0][3]);
  }
}

TEST(Cli, WeightsDumpThetaNeedsObservations) {
  for (const auto* file : {"population_equal_z.csv", "population_theta_only.csv"}) {
    const auto r = run("weights-dump --population " + kFixtures + "/" + file + " --target a --scheme theta --out " +
                       scratch("w_theta").string());
    EXPECT_EQ(r.code, 2) << file;
    EXPECT_EQ(last_line_json(r.err)["error"], "scheme_mismatch");
  }
}

TEST(Cli, WeightsDumpCombinedProductAndOrder) {
  const auto out = scratch("w_comb");
  ASSERT_EQ(run("weights-dump --population " + kFixtures + "/population.csv --target p07 --scheme combined --seed 3 "
                "--out " + out.string())
                .code,
            0);
  const auto t = igroup::csv::parse(slurp(out / "weights.csv"));
  ASSERT_EQ(t.rows.size(), 60u);
  double prev = INFINITY;
  double top = 0.0;
  for (const auto& row : t.rows) top = std::max(top, *igroup::csv::parse_double(row[3]));
  for (const auto& row : t.rows) {
    const double w1 = *igroup::csv::parse_double(row[1]);
    const double w2 = *igroup::csv::parse_double(row[2]);
    const double w = *igroup::csv::parse_double(row[3]);
    EXPECT_LE(w, prev);
    prev = w;
    // Products below the truncation level are stored as zero.
    if (w1 * w2 >= 1e-12 * top) {
      EXPECT_NEAR(w, w1 * w2, 1e-8 * std::max(w, 1e-300));
    } else {
      EXPECT_EQ(w, 0.0);
    }
  }
}

TEST(Cli, OutputsIndependentOfThreadCount) {
  const std::vector<std::string> commands{
      "simulate case1 --seed 4 --replications 2",
      "simulate case3 --row 5 --seed 4 --replications 1",
      "var --synthetic heterogeneous --seed 2 --bandwidth-grid 0.1,0.5,2",
      "bandwidth --population " + kFixtures + "/population.csv --scheme combined --seed 2",
      "weights-dump --population " + kFixtures + "/population.csv --target p01 --scheme theta --seed 2",
  };
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const auto a = scratch("det_a" + std::to_string(i));
    const auto b = scratch("det_b" + std::to_string(i));
    ASSERT_EQ(run("--threads 1 " + commands[i] + " --out " + a.string()).code, 0) << commands[i];
    ASSERT_EQ(run("--threads 3 " + commands[i] + " --out " + b.string()).code, 0) << commands[i];
    expect_same_outputs(a, b);
    expect_manifest_complete(a);
  }
}

}  // namespace
