#include "lpids_commands.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace lpids;
using lpids::cli::RunConfig;

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(RunConfig cfg) {
  std::ostringstream out, err;
  WarningHandler prev = set_warning_handler(
      [&err](std::string_view m) { err << "warning: " << m << '\n'; });
  const int code = cli::dispatch(cfg, out, err);
  set_warning_handler(prev);
  return {code, out.str(), err.str()};
}

RunConfig make(const std::string& command, int depth = 4) {
  RunConfig c;
  c.command = command;
  c.depth = depth;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("lpids_test_" + name);
  fs::remove_all(p);
  return p;
}

int exec(const std::string& args) {
  const std::string cmd = std::string(LPIDS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(CmdSequence, Examples) {
  auto c = make("sequence", 2);
  c.to = 3;
  const auto r = run(c);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out,
            "n,bits,lambda,decimal\n"
            "0,01,1/4,0.25\n"
            "1,11,3/4,0.75\n"
            "2,00,0,0\n"
            "3,10,1/2,0.5\n");
  auto c1 = make("sequence", 1);
  c1.to = 1;
  EXPECT_EQ(run(c1).out, "n,bits,lambda,decimal\n0,0,0,0\n1,1,1/2,0.5\n");
  EXPECT_EQ(run(make("sequence", 0)).code, cli::usage);
}

TEST(CmdDistal, AllPassAndSymmetric) {
  auto c = make("distal");
  c.kmax = 16;
  c.distal_depth = 20;
  c.symmetric = true;
  const auto r = run(c);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.find("fail"), std::string::npos);
  // Rows for -k and +k agree after the k column.
  std::istringstream in(r.out);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  for (int k = 1; k <= 16; ++k) {
    const auto& neg = rows[static_cast<std::size_t>(17 - k)];
    const auto& pos = rows[static_cast<std::size_t>(16 + k)];
    EXPECT_EQ(neg.substr(neg.find(',')), pos.substr(pos.find(',')));
  }
}

TEST(CmdDistal, ShallowDepthWarnsAndFails) {
  auto c = make("distal");
  c.kmax = 64;
  c.distal_depth = 8;
  const auto r = run(c);
  EXPECT_NE(r.err.find("slack"), std::string::npos);
  EXPECT_EQ(r.code, cli::verdict_fail);
}

TEST(CmdLanding, Examples) {
  auto c = make("landing", 1);
  c.j = 1;
  const auto r = run(c);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("\n1,1,1,1,"), std::string::npos);
  auto all = make("landing", 6);
  EXPECT_EQ(run(all).code, 0);
  auto bad = make("landing", 2);
  bad.j = 4;
  EXPECT_EQ(run(bad).code, cli::usage);
}

TEST(CmdLattice, Examples) {
  auto c = make("lattice");
  c.d = 2;
  c.delta = 1;
  c.x = 0;
  auto r = run(c);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("sum,3,3,"), std::string::npos);
  c.average_m = 1;
  r = run(c);
  EXPECT_NE(r.out.find("average,1.5,1.5,"), std::string::npos);
  c.d = 1;
  EXPECT_EQ(run(c).code, cli::usage);
}

TEST(CmdSpectrum, EpsilonValidation) {
  auto c = make("spectrum", 4);
  c.epsilon = 0.5;
  auto r = run(c);
  EXPECT_EQ(r.code, cli::usage);
  EXPECT_NE(r.err.find("--override-epsilon"), std::string::npos);
  c.override_epsilon = true;
  r = run(c);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_NE(r.out.find("method sturm-bisection/tridiagonal"), std::string::npos);
}

TEST(CmdIds, FreeMatchesArccosAndWarnsOnSize) {
  auto c = make("ids", 4);
  c.free = true;
  c.size = 512;
  const auto r = run(c);
  ASSERT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "E,k");
  double sup = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const double e = std::stod(line.substr(0, comma)), k = std::stod(line.substr(comma + 1));
    sup = std::max(sup, std::abs(k - (1 - std::acos(std::clamp(e / 2, -1.0, 1.0)) / M_PI)));
  }
  EXPECT_LE(sup, 2.0 / 512);

  auto odd = make("ids", 4);
  odd.size = 100;
  EXPECT_NE(run(odd).err.find("not a multiple"), std::string::npos);
}

TEST(CmdIds, CacheHitIsByteIdentical) {
  const auto cache = scratch("cache");
  const auto out1 = scratch("out1"), out2 = scratch("out2");
  auto c = make("ids", 5);
  c.cache_dir = cache.string();
  c.out_dir = out1.string();
  ASSERT_EQ(run(c).code, 0);
  ASSERT_EQ(std::distance(fs::directory_iterator(cache), fs::directory_iterator{}), 1);
  c.out_dir = out2.string();
  ASSERT_EQ(run(c).code, 0);
  EXPECT_EQ(slurp(out1 / "ids.csv"), slurp(out2 / "ids.csv"));
  EXPECT_EQ(slurp(out1 / "eigenvalues.txt"), slurp(out2 / "eigenvalues.txt"));
  // Cached and fresh spectra agree exactly.
  auto fresh = c;
  fresh.cache_dir.clear();
  fresh.out_dir = scratch("out3").string();
  ASSERT_EQ(run(fresh).code, 0);
  EXPECT_EQ(slurp(out1 / "ids.csv"), slurp(fs::path(fresh.out_dir) / "ids.csv"));
}

TEST(CmdLocalization, DefectAndRange) {
  auto c = make("localization", 4);
  c.sites = {20, 40};
  c.size = 64;
  const auto r = run(c);
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string t; std::getline(ls, t, ',');) f.push_back(t);
    ASSERT_EQ(f.size(), 9u);
    EXPECT_LE(std::stod(f[4]), std::stod(f[5]));  // defect <= 64 eps^2
    ++rows;
  }
  EXPECT_EQ(rows, 2);
  c.sites = {64};
  EXPECT_EQ(run(c).code, cli::usage);
}

TEST(CmdModulus, PassFreeFailAndLevels) {
  auto c = make("modulus", 5);
  auto r = run(c);
  EXPECT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out.substr(0, r.out.rfind("verdict")));
  EXPECT_EQ(j["verdict"], "PASS");
  EXPECT_EQ(j["levels"].size(), 5u);
  EXPECT_TRUE(j["levels"][0].contains("m_prime"));
  EXPECT_LE(j["empirical_lipschitz"].get<double>(), 1.1 * j["theoretical_bound"].get<double>());

  auto f = make("modulus", 8);
  f.free = true;
  f.epsilon = 0.25;
  f.size = 4096;
  r = run(f);
  EXPECT_EQ(r.code, cli::verdict_fail);
  const auto jf = nlohmann::json::parse(r.out.substr(0, r.out.rfind("verdict")));
  EXPECT_TRUE(jf["theoretical_bound"].is_null());
  EXPECT_NEAR(jf["edge_holder_exponent"].get<double>(), 0.5, 0.1);

  auto lv = make("modulus", 4);
  lv.levels = "1:6";
  EXPECT_EQ(run(lv).code, cli::usage);
}

TEST(CmdReport, ValidRunPasses) {
  auto c = make("report", 5);
  c.kmax = 32;
  const auto r = run(c);
  EXPECT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["verdict"], "PASS");
  EXPECT_TRUE(j["matching"]["bijective"].get<bool>());
}

TEST(Binary, ExitCodesAndDeterminism) {
  EXPECT_EQ(exec("sequence -m 2"), 0);
  EXPECT_EQ(exec("sequence -m 0"), 1);
  EXPECT_EQ(exec("nonsense"), 1);
  EXPECT_EQ(exec("spectrum -m 4 --epsilon 0.5"), 1);
  EXPECT_EQ(exec("distal --kmax 64 --distal-depth 8"), 2);
  EXPECT_EQ(exec("modulus -m 4 --levels 1:5"), 1);
  EXPECT_EQ(exec("--version"), 0);

  const auto a = scratch("bin_a"), b = scratch("bin_b");
  ASSERT_EQ(exec("--out " + a.string() + " modulus -m 5 --threads 1"), 0);
  ASSERT_EQ(exec("--out " + b.string() + " modulus -m 5 --threads 3"), 0);
  EXPECT_EQ(slurp(a / "modulus.json"), slurp(b / "modulus.json"));
  EXPECT_EQ(slurp(a / "modulus.csv"), slurp(b / "modulus.csv"));
  EXPECT_FALSE(slurp(a / "modulus.csv").empty());
}
