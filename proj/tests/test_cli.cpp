#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "cli.hpp"
#include "crt/design_model.hpp"
#include "crt/rng.hpp"
#include "crt/simulation.hpp"

using namespace crt;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream o, e;
  Run r;
  r.code = run_cli(args, o, e);
  r.out = o.str();
  r.err = e.str();
  return r;
}

std::string last_line(const std::string& s) {
  auto t = s;
  while (!t.empty() && t.back() == '\n') t.pop_back();
  const auto p = t.rfind('\n');
  return p == std::string::npos ? t : t.substr(p + 1);
}

std::string strip_wall_time(std::string s) {
  s = std::regex_replace(s, std::regex("\"wall_time\": [0-9.e+-]+"), "\"wall_time\": 0");
  return std::regex_replace(s, std::regex("wall_time=[0-9.]+"), "wall_time=0");
}

const char* kTaskConfig = R"(
[factor.f1]
levels = ["l1", "l2"]
[factor.f2]
levels = ["l1", "l2", "l3"]
[factor.f3]
levels = ["l1", "l2", "l3"]
[factor.f4]
levels = ["l1", "l2"]
)";

// A scratch directory with a multi-task dataset and its config.
struct Workspace {
  fs::path dir;
  std::string data, data_j1, data_j3, config;

  Workspace() {
    dir = fs::temp_directory_path() / ("crt_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    config = (dir / "c.toml").string();
    std::ofstream(config) << kTaskConfig;
    auto write = [&](const std::string& name, std::size_t J) {
      TaskDgp d;
      d.n = 120;
      d.J = J;
      const auto path = (dir / name).string();
      save_dataset(generate_tasks(d, 11), path);
      return path;
    };
    data = write("d.csv", 4);
    data_j1 = write("d1.csv", 1);
    data_j3 = write("d3.csv", 3);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("test: JSON then wall time then the p-value line") {
  const auto r = cli({"test", "--data", ws().data, "--config", ws().config, "--target", "f1", "--B", "19", "--seed",
                      "7", "--lambda", "0.01"});
  CHECK(r.code == 0);
  std::smatch m;
  const auto line = last_line(r.out);
  REQUIRE(std::regex_match(line, m, std::regex("p_value=([0-9]+)/([0-9]+)")));
  const int num = std::stoi(m[1]), den = std::stoi(m[2]);
  CHECK(den == 20);
  CHECK(num >= 1);
  CHECK(num <= 20);
  CHECK(r.out.find("\"resampled_statistics\"") != std::string::npos);
  CHECK(r.out.find("wall_time=") != std::string::npos);
}

TEST_CASE("test: repeated runs and worker counts give identical output") {
  std::vector<std::string> outs;
  for (const char* w : {"1", "4", "16"}) {
    const auto out = ws().path(std::string("r") + w + ".json");
    const auto r = cli({"test", "--data", ws().data, "--config", ws().config, "--target", "f2", "--B", "15", "--seed",
                        "3", "--workers", w, "--out", out});
    REQUIRE(r.code == 0);
    std::ifstream in(out);
    std::stringstream ss;
    ss << in.rdbuf();
    outs.push_back(strip_wall_time(ss.str()) + last_line(r.out));
  }
  CHECK(outs[0] == outs[1]);
  CHECK(outs[0] == outs[2]);
}

TEST_CASE("missing seed is generated and printed") {
  const auto r = cli({"regularity", "order", "--data", ws().data, "--config", ws().config, "--B", "5", "--lambda",
                      "0.01"});
  CHECK(r.code == 0);
  CHECK(std::regex_search(r.out, std::regex("(^|\\n)seed=[0-9]+\\n")));
}

TEST_CASE("regularity contracts") {
  const auto f = cli({"regularity", "fatigue", "--data", ws().data_j1, "--config", ws().config, "--B", "5", "--seed",
                      "1"});
  CHECK(f.code == 2);
  CHECK(f.err.find("fatigue test requires J ≥ 2") != std::string::npos);
  const auto c = cli({"regularity", "carryover", "--data", ws().data_j3, "--config", ws().config, "--B", "5", "--seed",
                      "1", "--lambda", "0.01"});
  CHECK(c.code == 0);
  CHECK(c.err.find("dropping final task") != std::string::npos);
  CHECK(last_line(c.out).rfind("p_value=", 0) == 0);
}

TEST_CASE("exit codes") {
  CHECK(cli({"simulate", "nonsense", "--seed", "1"}).code == 2);
  CHECK(cli({"test", "--data", ws().path("absent.csv"), "--config", ws().config, "--target", "f1"}).code == 2);
  CHECK(cli({"test", "--data", ws().data, "--config", ws().config, "--target", "nope", "--seed", "1"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({}).code == 2);
  const auto bad = ws().path("bad.toml");
  std::ofstream(bad) << "[factor.f1]\nlevels = [\"l1\"]\n";
  const auto r = cli({"test", "--data", ws().data, "--config", bad, "--target", "f1", "--seed", "1"});
  CHECK(r.code == 2);
  CHECK(r.err.find("bad.toml:1") != std::string::npos);
}

TEST_CASE("amce and screen print a p-value") {
  const auto a = cli({"amce", "--data", ws().data, "--config", ws().config, "--target", "f1"});
  CHECK(a.code == 0);
  CHECK(last_line(a.out).rfind("p_value=", 0) == 0);
  const auto s = cli({"screen", "--data", ws().data, "--config", ws().config, "--target", "f1", "--variables", "f2",
                      "f3", "--B", "9", "--seed", "2"});
  CHECK(s.code == 0);
  CHECK(s.out.find("variable,statistic,p_value,p_value_numeric\n") != std::string::npos);
  CHECK(s.out.find("\nf2,") != std::string::npos);
  CHECK(s.out.find("\nf3,") != std::string::npos);
  CHECK(last_line(s.out).rfind("p_value=", 0) == 0);
}

TEST_CASE("simulate inflation: one CSV row per num_z") {
  const auto r = cli({"simulate", "inflation", "--reps", "2", "--n", "400", "--seed", "1", "--grid", "2", "3", "4"});
  CHECK(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 4);
  CHECK(r.out.rfind("num_z,", 0) == 0);
}

TEST_CASE("simulate power writes summary and rows") {
  const auto prefix = ws().path("pw");
  const auto r = cli({"simulate", "power", "--reps", "2", "--B", "5", "--n", "150", "--seed", "1", "--grid", "0",
                      "0.1", "--methods", "amce", "--out", prefix});
  CHECK(r.code == 0);
  CHECK(fs::exists(prefix + "_summary.csv"));
  CHECK(fs::exists(prefix + "_rows.csv"));
}

namespace {

// Origin effect: Mexico strongly preferred over the European countries.
std::string coarsen_dataset(std::uint64_t seed, const std::string& path) {
  const std::vector<std::string> origin{"France", "Germany", "Poland", "Mexico", "China"};
  CounterRng rng(seed);
  const std::size_t n = 300;
  LevelMatrix L(n, 2), R(n, 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    L(r, 0) = static_cast<int>(rng.below(5));
    R(r, 0) = static_cast<int>(rng.below(5));
    L(r, 1) = static_cast<int>(rng.below(2));
    R(r, 1) = static_cast<int>(rng.below(2));
    const double eta = 1.5 * ((L(r, 0) == 3) - (R(r, 0) == 3));
    y[i] = rng.uniform() < 1 / (1 + std::exp(-eta)) ? 1 : 0;
  }
  FactorSpec o{"origin", origin}, j{"job", {"doctor", "gardener"}};
  save_dataset(make_dataset({o, j}, n, 1, L, R, y), path);
  return path;
}

}  // namespace

TEST_CASE("coarsened test end to end: Mexico vs Europe") {
  const auto cfg = ws().path("o.toml");
  std::ofstream(cfg) << "[factor.origin]\nlevels = [\"France\", \"Germany\", \"Poland\", \"Mexico\", \"China\"]\n"
                        "[factor.job]\nlevels = [\"doctor\", \"gardener\"]\n";
  const auto eu = ws().path("europe.toml");
  std::ofstream(eu) << "[coarsen]\nfactor = \"origin\"\nkeep_others = true\n"
                       "[coarsen.map]\nEurope = [\"France\", \"Germany\", \"Poland\"]\n"
                       "[coarsen.groups]\nmexico-europe = [\"Mexico\", \"Europe\"]\n";
  std::size_t hits = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto data = coarsen_dataset(40 + s, ws().path("o" + std::to_string(s) + ".csv"));
    const auto r = cli({"test", "--data", data, "--config", cfg, "--coarsen", eu, "--group", "mexico-europe", "--B",
                        "99", "--seed", std::to_string(s)});
    REQUIRE(r.code == 0);
    std::smatch m;
    const auto line = last_line(r.out);
    REQUIRE(std::regex_match(line, m, std::regex("p_value=([0-9]+)/([0-9]+)")));
    hits += std::stod(m[1]) / std::stod(m[2]) < 0.05;
  }
  CHECK(hits >= 16);
}
