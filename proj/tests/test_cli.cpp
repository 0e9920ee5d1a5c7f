#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmfg/cli.hpp"

using namespace hmfg;
namespace fs = std::filesystem;

namespace {

const std::string kDir = HMFG_SCENARIO_DIR;

std::string scenario(const std::string& name) { return kDir + "/" + name + ".json"; }

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("hmfg_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::vector<std::string>& header) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  header.clear();
  std::stringstream hs(line);
  for (std::string c; std::getline(hs, c, ',');) header.push_back(c);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> r;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) r.push_back(std::stod(c));
    rows.push_back(r);
  }
  return rows;
}

int column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  ADD_FAILURE() << "missing column " << name;
  return 0;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* k, const char* v) : key_(k) { setenv(k, v, 1); }
  ~ScopedEnv() { unsetenv(key_); }

 private:
  const char* key_;
};

}  // namespace

TEST(CliSolve, TrivialScenarioHasZeroExploitability) {
  auto d = fresh_dir("trivial");
  auto r = run({"solve", scenario("trivial"), "--out", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = read_json(d / "solve_report.json");
  EXPECT_EQ(j["weighted_exploitability"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(d / "exploitability.csv"));
}

TEST(CliSolve, RerunsAreByteIdenticalAcrossThreadCounts) {
  auto a = fresh_dir("rerun_a"), b = fresh_dir("rerun_b");
  ASSERT_EQ(run({"solve", scenario("parametric_mixed"), "--out", a.string(), "--seed", "3", "--threads", "1"}).code, 0);
  ASSERT_EQ(run({"solve", scenario("parametric_mixed"), "--out", b.string(), "--seed", "3", "--threads", "8"}).code, 0);
  EXPECT_EQ(slurp(a / "solve_report.json"), slurp(b / "solve_report.json"));
  EXPECT_EQ(slurp(a / "exploitability.csv"), slurp(b / "exploitability.csv"));
}

TEST(CliSolve, PricingDeskRegression) {
  auto d = fresh_dir("desk_solve");
  ASSERT_EQ(run({"solve", scenario("pricing_desk"), "--out", d.string()}).code, 0);
  auto j = read_json(d / "solve_report.json");
  // frozen from the first run
  EXPECT_NEAR(j["weighted_exploitability"].get<double>(), 0.00032893816775726785, 1e-12);
  EXPECT_EQ(j["iterations"].get<int>(), 200);
}

TEST(CliCertify, HomogeneousSingleGroupHasNoHeterogeneity) {
  auto d = fresh_dir("homog");
  auto r = run({"certify", scenario("homogeneous"), "--out", d.string(), "--rollouts", "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto c = read_json(d / "certificate.json");
  EXPECT_EQ(c["eps_heter"].get<double>(), 0.0);
  EXPECT_FALSE(c.contains("nashconv_exact"));
  const double total = c["total"].get<double>();
  EXPECT_NEAR(total, c["eps_solver"].get<double>() + c["eps_mf"].get<double>(), 1e-12 * total);
  EXPECT_TRUE(fs::exists(d / "flow_deviation.csv"));
}

TEST(CliCertify, TwoTypePricingNashConvBelowCertificate) {
  auto d = fresh_dir("desk_cert");
  auto r = run({"certify", scenario("pricing_desk"), "--out", d.string(), "--nashconv", "--rollouts", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto c = read_json(d / "certificate.json");
  ASSERT_TRUE(c.contains("nashconv_exact"));
  EXPECT_GE(c["nashconv_exact"].get<double>(), -1e-12);
  EXPECT_LE(c["nashconv_exact"].get<double>(), c["total"].get<double>());
  // kmeans:2 recovers the two types exactly
  EXPECT_EQ(c["eps_heter"].get<double>(), 0.0);
  EXPECT_FALSE(fs::exists(d / "flow_deviation.csv"));
}

TEST(CliCertify, RerunsAreByteIdenticalAcrossThreadCounts) {
  auto a = fresh_dir("cert_a"), b = fresh_dir("cert_b");
  for (auto [dir, th] : {std::pair{a, "1"}, std::pair{b, "8"}})
    ASSERT_EQ(run({"certify", scenario("pricing_table"), "--out", dir.string(), "--seed", "9", "--threads", th,
                   "--nashconv", "--rollouts", "100"})
                  .code,
              0);
  for (const char* f : {"certificate.json", "bound_report.json", "eps_t.csv", "flow_deviation.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(CliCertify, InvalidPartitionFileIsValidationError) {
  auto d = fresh_dir("badfile");
  fs::create_directories(d);
  {
    std::ofstream f(d / "groups.json");
    f << R"({"K": 0, "assignment": [0, 0, 0, 0]})";
  }
  auto r = run({"certify", scenario("pricing_desk"), "--out", (d / "o").string(), "--partition",
                "file:" + (d / "groups.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  {
    std::ofstream f(d / "groups.json");
    f << R"({"K": 2, "assignment": [0, 1, 1, 2]})";
  }
  EXPECT_EQ(run({"certify", scenario("pricing_desk"), "--out", (d / "o").string(), "--partition",
                 "file:" + (d / "groups.json").string()})
                .code,
            2);
  {
    std::ofstream f(d / "groups.json");
    f << R"({"K": 2, "assignment": [1, 1, 0, 0]})";
  }
  EXPECT_EQ(run({"certify", scenario("pricing_desk"), "--out", (d / "o").string(), "--partition",
                 "file:" + (d / "groups.json").string()})
                .code,
            0);
}

TEST(CliErrors, ExitCodes) {
  auto d = fresh_dir("errors");
  fs::create_directories(d);
  {
    std::ofstream f(d / "broken.json");
    f << "{\"type\": \"parametric\",";
  }
  EXPECT_EQ(run({"solve", (d / "broken.json").string(), "--out", (d / "o").string()}).code, 2);
  EXPECT_EQ(run({"solve", (d / "missing.json").string(), "--out", (d / "o").string()}).code, 2);
  EXPECT_EQ(run({"solve", scenario("trivial"), "--partition", "kmeans:9", "--out", (d / "o").string()}).code, 2);
  EXPECT_EQ(run({"solve", scenario("uniform_population"), "--out", (d / "o").string()}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"sweep", scenario("trivial"), "--vary", "K", "--grid", "1,x", "--out", (d / "o").string()}).code, 2);
  EXPECT_EQ(run({"certify", scenario("trivial"), "--bound", "loose", "--out", (d / "o").string()}).code, 2);
}

TEST(CliErrors, ResourceCapRefusal) {
  auto d = fresh_dir("cap");
  {
    ScopedEnv env("HMFG_JOINT_STATE_CAP", "10");
    auto r = run({"certify", scenario("pricing_desk"), "--out", d.string(), "--nashconv", "--rollouts", "0"});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("HMFG_JOINT_STATE_CAP"), std::string::npos);
  }
  // exact partition search over 100000 players
  EXPECT_EQ(run({"partition", scenario("uniform_population"), "--partition", "exact", "--out", d.string()}).code, 3);
}

TEST(CliManifest, ListsEveryOutputFile) {
  auto d = fresh_dir("manifest");
  ASSERT_EQ(run({"certify", scenario("homogeneous"), "--out", d.string(), "--seed", "4"}).code, 0);
  auto m = read_json(d / "manifest.json");
  EXPECT_EQ(m["command"], "certify");
  EXPECT_EQ(m["seed"].get<int>(), 4);
  std::set<std::string> listed;
  for (const auto& f : m["files"]) listed.insert(f.get<std::string>());
  std::set<std::string> present;
  for (const auto& e : fs::directory_iterator(d))
    if (e.path().filename() != "manifest.json") present.insert(e.path().filename().string());
  EXPECT_EQ(listed, present);
}

TEST(CliSweep, EpsMfDecreasesInN) {
  auto d = fresh_dir("sweep_n");
  auto r = run({"sweep", scenario("homogeneous"), "--vary", "N", "--grid", "100,10000,1000000", "--out", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::vector<std::string> h;
  auto rows = read_csv(d / "sweep_N.csv", h);
  ASSERT_EQ(rows.size(), 3u);
  const int c = column(h, "eps_mf");
  EXPECT_GT(rows[0][c], rows[1][c]);
  EXPECT_GT(rows[1][c], rows[2][c]);
}

TEST(CliSweep, TwoTypeEpsMfDecreasesInN) {
  auto d = fresh_dir("sweep_tt_n");
  ASSERT_EQ(run({"sweep", scenario("pricing_desk"), "--vary", "N", "--grid", "100,10000,1000000", "--out", d.string()})
                .code,
            0);
  std::vector<std::string> h;
  auto rows = read_csv(d / "sweep_N.csv", h);
  for (const char* name : {"eps_mf_1", "eps_mf_2"}) {
    const int c = column(h, name);
    EXPECT_GT(rows[0][c], rows[1][c]);
    EXPECT_GT(rows[1][c], rows[2][c]);
  }
}

TEST(CliSweep, UniformHeterogeneityMatchesQuantization) {
  auto d = fresh_dir("sweep_k");
  ASSERT_EQ(run({"sweep", scenario("uniform_population"), "--vary", "K", "--grid", "1,2,4", "--out", d.string()}).code,
            0);
  std::vector<std::string> h;
  auto rows = read_csv(d / "sweep_K.csv", h);
  ASSERT_EQ(rows.size(), 3u);
  const int sse = column(h, "within_sse_mean"), heter = column(h, "eps_heter"), K = column(h, "K");
  for (const auto& r : rows) {
    const double want = 1.0 / (12.0 * r[K] * r[K]);
    EXPECT_NEAR(r[sse], want, 0.1 * want) << r[K];
  }
  EXPECT_GT(rows[0][heter], rows[1][heter]);
  EXPECT_GT(rows[1][heter], rows[2][heter]);
}

TEST(CliSweep, C2GapFlipsOrderingOnce) {
  auto p = load_scenario(scenario("pricing_desk"));
  const auto& tt = *p.two_type;
  const auto& q = *p.pricing;
  // crossing gap from the linear closed form of the one-population heterogeneity
  const double slope = 2.0 * (q.H_cap + q.Q_cap) * (q.T + 1) * std::sqrt(tt.alpha * (1 - tt.alpha));
  const double g_star = (pricing_eps_mf_two(q, tt.N, tt.alpha) - pricing_eps_mf_one(q, tt.N)) / slope;
  ASSERT_GT(g_star, 0.0);
  std::string grid;
  for (int i = 1; i <= 20; ++i) grid += (i > 1 ? "," : "") + fmt_double(g_star * 0.1 * i);
  auto d = fresh_dir("sweep_gap");
  ASSERT_EQ(run({"sweep", scenario("pricing_desk"), "--vary", "c2gap", "--grid", grid, "--out", d.string()}).code, 0);
  std::vector<std::string> h;
  auto rows = read_csv(d / "sweep_c2gap.csv", h);
  const int better = column(h, "better_model"), gap = column(h, "c2gap");
  int flips = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) flips += rows[i][better] != rows[i - 1][better];
  EXPECT_EQ(flips, 1);
  EXPECT_EQ(rows.front()[better], 1.0);
  EXPECT_EQ(rows.back()[better], 2.0);
  for (const auto& r : rows) {
    if (std::abs(r[gap] - g_star) <= 1e-9 * g_star) continue;
    EXPECT_EQ(r[better], r[gap] < g_star ? 1.0 : 2.0) << r[gap];
  }
}

TEST(CliPartition, ExactOnSmallFamily) {
  auto d = fresh_dir("partition");
  ASSERT_EQ(run({"partition", scenario("parametric_mixed"), "--out", d.string()}).code, 0);
  auto j = read_json(d / "partition.json");
  EXPECT_EQ(j["method"], "exact_enum");
  int total = 0;
  for (const auto& s : j["sizes"]) total += s.get<int>();
  EXPECT_EQ(total, 6);
  EXPECT_NEAR(j["micp_objective"].get<double>(), j["objective"].get<double>(), 1e-12);
}

TEST(CliPricingDemo, WritesStudy) {
  auto d = fresh_dir("demo");
  ASSERT_EQ(run({"pricing-demo", scenario("pricing_desk"), "--out", d.string(), "--nashconv"}).code, 0);
  auto j = read_json(d / "pricing_demo.json");
  EXPECT_NEAR(j["mf_ratio_at_1e8"].get<double>(), j["mf_ratio_limit"].get<double>(), 1e-3);
  ASSERT_EQ(j["desk"].size(), 2u);
  EXPECT_EQ(j["desk"][1]["eps_heter"].get<double>(), 0.0);
  EXPECT_GT(j["desk"][0]["eps_heter"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(d / "two_type.csv"));
}
