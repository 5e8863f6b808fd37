#include <gtest/gtest.h>

#include <sstream>

#include "cli/commands.hpp"
#include "cli/csv.hpp"
#include "cli/report.hpp"
#include "support.hpp"

using namespace phaselock;
using namespace phaselock::cli;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun invoke(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

Json report_of(const fs::path& dir) { return Json::parse(slurp(dir / "report.json")); }

std::size_t file_count(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator()));
}

/// Small, fast generation config shared by several tests.
std::string small_config(std::size_t samples) {
  return R"({"simulation": {"samples": )" + std::to_string(samples) + "}}";
}

}  // namespace

TEST(Csv, HeaderDetection) {
  const Table with = parse_csv("a,b\n1,2\n3,4\n");
  EXPECT_EQ(with.header, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(with.values.rows(), 2);
  const Table without = parse_csv("1,2\n3,4.5e-1\n");
  EXPECT_TRUE(without.header.empty());
  EXPECT_EQ(without.values(1, 1), 0.45);
}

TEST(Csv, Errors) {
  try {
    parse_csv("1,2\n3\n");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_csv("1,2\n3,x\n"), InvalidArgument);
  EXPECT_THROW(parse_csv(""), InvalidArgument);
}

TEST(Csv, RoundTripIsExact) {
  RowMatrix m(2, 2);
  m << 0.1, -1.0 / 3.0, 1e-300, 12345.678;
  const Table t = parse_csv(to_csv(m, {"p", "q"}, 17));
  EXPECT_EQ(max_abs(t.values - m), 0.0);
}

TEST(Report, RoundTrip) {
  Report r{"plv", {{"seed", 3}}, {{"x", 1.5}}, {"a.csv", "report.json"}};
  const Report back = Report::parse(r.serialize());
  EXPECT_EQ(back.command, "plv");
  EXPECT_EQ(back.config, r.config);
  EXPECT_EQ(back.metrics, r.metrics);
  EXPECT_EQ(back.artifacts, r.artifacts);
}

TEST(OutputSetTest, UncommittedLeavesNothing) {
  const auto dir = scratch_dir("outputset");
  {
    OutputSet files(dir);
    files.add("a.txt", "x");
    EXPECT_EQ(file_count(dir), 1u);
  }
  EXPECT_EQ(file_count(dir), 0u);
  {
    OutputSet files(dir);
    files.add("a.txt", "x");
    files.commit();
  }
  EXPECT_EQ(slurp(dir / "a.txt"), "x");
  EXPECT_EQ(file_count(dir), 1u);
}

TEST(Recovery, Score) {
  EXPECT_EQ(recovery_score({0, 0, 1, 1}, {1, 1, 0, 0}), 1.0);
  EXPECT_EQ(recovery_score({0, 0, 1, 1}, {0, 0, 0, 0}), 0.5);
  EXPECT_EQ(recovery_score({0, 0, 1, 1}, {0, 1, 1, 1}), 0.75);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(invoke({}).code, kUsage);
  EXPECT_EQ(invoke({"simulate", "--bogus"}).code, kUsage);
  EXPECT_EQ(invoke({"plv"}).code, kUsage);
  EXPECT_EQ(invoke({"--help"}).code, kOk);
}

TEST(Cli, SimulateWritesDeterministicFiles) {
  const auto dir = scratch_dir("cli_sim");
  spit(dir / "cfg.json", small_config(2000));
  const auto a = dir / "a";
  const auto b = dir / "b";
  ASSERT_EQ(invoke({"--config", (dir / "cfg.json").string(), "--out", a.string(), "--quiet", "simulate"}).code, kOk);
  ASSERT_EQ(invoke({"--config", (dir / "cfg.json").string(), "--out", b.string(), "--quiet", "simulate"}).code, kOk);
  for (const char* f : {"sources.csv", "mixtures.csv", "phases.csv", "report.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(file_count(a), 4u);
  EXPECT_EQ(read_csv(a / "mixtures.csv").values.rows(), 2000);
  const Json rep = report_of(a);
  EXPECT_EQ(rep["command"], "simulate");
  EXPECT_LT(rep["metrics"]["mixing_condition"].get<double>(), 10.0);
}

TEST(Cli, UncoupledNoiselessPhasesAreLinear) {
  const auto dir = scratch_dir("cli_linear");
  spit(dir / "cfg.json", R"({"network": {"cluster_sizes": [1, 1], "omega": [1.0, 2.5], "kappa_intra": 0.0},
    "simulation": {"samples": 500, "noise": 0.0, "phases0": [0.3, -1.0]}, "mixing": {"kind": "none"}})");
  ASSERT_EQ(invoke({"--config", (dir / "cfg.json").string(), "--out", dir.string(), "--quiet", "simulate"}).code, kOk);
  EXPECT_FALSE(fs::exists(dir / "mixtures.csv"));
  const Table phases = read_csv(dir / "phases.csv");
  const double omega[2] = {1.0, 2.5};
  const double p0[2] = {0.3, -1.0};
  double err = 0.0;
  for (Eigen::Index t = 0; t < phases.values.rows(); ++t)
    for (Eigen::Index i = 0; i < 2; ++i)
      err = std::max(err, wrapped_distance(phases.values(t, i), p0[i] + omega[i] * 0.01 * static_cast<double>(t)));
  EXPECT_LT(err, 1e-8);
}

TEST(Cli, PlvOfDuplicatedColumn) {
  const auto dir = scratch_dir("cli_plv");
  std::string csv = "a,b,c\n";
  for (int t = 0; t < 256; ++t) {
    const double x = std::cos(kTwoPi * 8 * t / 256.0);
    const double y = std::cos(kTwoPi * 13 * t / 256.0 + 0.4);
    csv += format_number(x, 17) + "," + format_number(x, 17) + "," + format_number(y, 17) + "\n";
  }
  spit(dir / "x.csv", csv);
  ASSERT_EQ(invoke({"--out", dir.string(), "--quiet", "plv", "--input", (dir / "x.csv").string()}).code, kOk);
  const Table m = read_csv(dir / "plv_abs.csv");
  ASSERT_EQ(m.values.rows(), 3);
  EXPECT_NEAR(m.values(0, 1), 1.0, 1e-12);
  EXPECT_LT(m.values(0, 2), 1e-10);

  std::string single = "a\n";
  for (int t = 0; t < 64; ++t) single += format_number(std::cos(kTwoPi * 4 * t / 64.0), 17) + "\n";
  spit(dir / "one.csv", single);
  const auto one = dir / "one";
  ASSERT_EQ(invoke({"--out", one.string(), "--quiet", "plv", "--input", (dir / "one.csv").string()}).code, kOk);
  EXPECT_EQ(read_csv(one / "plv_abs.csv").values.size(), 1);
  EXPECT_NEAR(read_csv(one / "plv_abs.csv").values(0, 0), 1.0, 1e-15);

  spit(dir / "bad.csv", "1,2\n3,4\n5\n");
  const CliRun bad = invoke({"--out", (dir / "bad").string(), "plv", "--input", (dir / "bad.csv").string()});
  EXPECT_EQ(bad.code, kUsage);
  EXPECT_NE(bad.err.find("line 3"), std::string::npos) << bad.err;
  EXPECT_EQ(file_count(dir / "bad"), 0u);
}

TEST(Cli, RpaRecoversReferenceSource) {
  const auto dir = scratch_dir("cli_rpa");
  spit(dir / "cfg.json", small_config(4000));
  ASSERT_EQ(invoke({"--config", (dir / "cfg.json").string(), "--out", dir.string(), "--quiet", "simulate"}).code, kOk);
  // source 0 as reference: its column is extracted by the reader (column 0)
  const CliRun r = invoke({"--out", (dir / "rpa").string(), "--trim", "200", "--quiet", "rpa", "--input",
                     (dir / "mixtures.csv").string(), "--reference", (dir / "sources.csv").string()});
  ASSERT_TRUE(r.code == kOk || r.code == kNotConverged) << r.err;
  EXPECT_GT(report_of(dir / "rpa")["metrics"]["plv_magnitude"].get<double>(), 0.99);
  EXPECT_TRUE(fs::exists(dir / "rpa" / "w.csv"));
}

TEST(Cli, IpaZeroIterationsKeepsIdentity) {
  const auto dir = scratch_dir("cli_ipa");
  spit(dir / "cfg.json", small_config(2000));
  ASSERT_EQ(invoke({"--config", (dir / "cfg.json").string(), "--out", dir.string(), "--quiet", "simulate"}).code, kOk);
  const CliRun r = invoke({"--out", (dir / "ipa").string(), "--quiet", "ipa", "--input", (dir / "mixtures.csv").string(),
                     "--max-iters", "0"});
  EXPECT_EQ(r.code, kNotConverged) << r.err;
  const Table w = read_csv(dir / "ipa" / "W.csv");
  EXPECT_EQ(max_abs(w.values - Eigen::MatrixXd::Identity(4, 4)), 0.0);
}

TEST(Cli, PscaOnBlockFeatures) {
  const auto dir = scratch_dir("cli_psca");
  spit(dir / "re.csv", "0.6,0\n0.5,0\n0,0.7\n0,0.4\n0,0.5\n");
  spit(dir / "im.csv", "0.1,0\n-0.2,0\n0,0.1\n0,0.3\n0,-0.1\n");
  const CliRun r = invoke({"--out", dir.string(), "--quiet", "psca", "--v-real", (dir / "re.csv").string(), "--v-imag",
                     (dir / "im.csv").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto assignment = report_of(dir)["metrics"]["assignment"].get<std::vector<int>>();
  ASSERT_EQ(assignment.size(), 5u);
  EXPECT_EQ(assignment[0], assignment[1]);
  EXPECT_EQ(assignment[2], assignment[3]);
  EXPECT_EQ(assignment[3], assignment[4]);
  EXPECT_NE(assignment[0], assignment[2]);
}

TEST(Cli, PscaAllKinkIsComputationError) {
  const auto dir = scratch_dir("cli_kink");
  spit(dir / "re.csv", "1,1\n-1,-1\n");
  const CliRun r = invoke({"--out", dir.string(), "psca", "--v-real", (dir / "re.csv").string()});
  EXPECT_EQ(r.code, kComputation) << r.err;
  EXPECT_EQ(file_count(dir), 1u);  // the input only
}

TEST(Cli, GradcheckReproducibleAndSkips) {
  const auto dir = scratch_dir("cli_gc");
  for (const char* sub : {"a", "b"})
    ASSERT_EQ(invoke({"--out", (dir / sub).string(), "--quiet", "gradcheck", "--trials", "1"}).code, kOk);
  EXPECT_EQ(slurp(dir / "a" / "gradcheck.csv"), slurp(dir / "b" / "gradcheck.csv"));
  EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));

  const CliRun r = invoke({"--out", (dir / "k").string(), "--seed", "23168", "--quiet", "gradcheck", "--algorithm", "psca",
                     "--trials", "1"});
  EXPECT_EQ(r.code, kOk) << r.err;
  const Json psca = report_of(dir / "k")["metrics"]["algorithms"]["psca"];
  EXPECT_EQ(psca["skipped"], 1);
  EXPECT_EQ(psca["evaluated"], 0);
  EXPECT_TRUE(psca["relative_errors"][0].is_null());
}

TEST(Cli, PipelineRecoversClusters) {
  const auto dir = scratch_dir("cli_pipe");
  const CliRun r = invoke({"--out", dir.string(), "--quiet", "pipeline"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const Json m = report_of(dir)["metrics"];
  EXPECT_EQ(m["recovery"].get<double>(), 1.0);
  EXPECT_TRUE(m["ipa_reduced_all"].get<bool>());
  EXPECT_EQ(file_count(dir), 1u);
}

TEST(Cli, PipelineNegativeControl) {
  const auto dir = scratch_dir("cli_pipe_neg");
  const CliRun r = invoke({"--out", dir.string(), "--quiet", "pipeline", "--kappa-inter", "0.5"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const Json m = report_of(dir)["metrics"];
  EXPECT_LT(m["recovery"].get<double>(), 1.0);
  EXPECT_GT(m["trajectory_synchrony"]["cross_mean"].get<double>(), 0.9);
  EXPECT_EQ(m["clusters"].size(), 2u);
}

TEST(Cli, PipelineConfigErrors) {
  const auto dir = scratch_dir("cli_pipe_err");
  spit(dir / "empty.json", R"({"network": {"cluster_sizes": [2, 0]}})");
  const auto out = dir / "out";
  CliRun r = invoke({"--config", (dir / "empty.json").string(), "--out", out.string(), "pipeline"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("cluster 1 is empty"), std::string::npos) << r.err;
  EXPECT_EQ(file_count(out), 0u);

  spit(dir / "unknown.json", R"({"network": {"kapa_intra": 1.0}})");
  r = invoke({"--config", (dir / "unknown.json").string(), "--out", out.string(), "pipeline"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("kapa_intra"), std::string::npos) << r.err;

  spit(dir / "typed.json", R"({"simulation": {"dt": "fast"}})");
  r = invoke({"--config", (dir / "typed.json").string(), "--out", out.string(), "pipeline"});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("simulation.dt"), std::string::npos) << r.err;
  EXPECT_EQ(file_count(out), 0u);
}
