#include <gtest/gtest.h>

#include <regex>
#include <set>
#include <sstream>

#include "deflact/cli.hpp"
#include "deflact/errors.hpp"
#include "deflact/problems.hpp"
#include "deflact/recycle.hpp"
#include "deflact/rgrid.hpp"
#include "tempdir.hpp"

using namespace deflact;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.insert(e.path().filename().string());
  return names;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

/// gen a 16x16 sigma=2 geometric blur with 1% noise.
std::string small_blur(const TempDir& dir, const std::string& name = "p") {
  const std::string out = (dir / name).string();
  const CliResult r =
      cli({"gen", "--kind", "blur", "--size", "16", "--sigma", "2", "--noise-rel", "0.01", "--seed", "3", "--out", out});
  EXPECT_EQ(r.code, 0) << r.err;
  return out;
}

}  // namespace

TEST(ParseValueList, RangesAndLists) {
  EXPECT_EQ(parse_value_list("0.5:1.5:5"), (std::vector<double>{0.5, 0.75, 1.0, 1.25, 1.5}));
  EXPECT_EQ(parse_value_list("2:4:1"), (std::vector<double>{2.0}));
  EXPECT_EQ(parse_value_list("1e-1,1e-2,3"), (std::vector<double>{1e-1, 1e-2, 3.0}));
  EXPECT_THROW(parse_value_list("1:2"), ConfigError);
  EXPECT_THROW(parse_value_list("1:2:0"), ConfigError);
  EXPECT_THROW(parse_value_list("1:2:2.5"), ConfigError);
  EXPECT_THROW(parse_value_list("1,x"), ConfigError);
  EXPECT_THROW(parse_value_list(""), ConfigError);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  TempDir dir;
  const CliResult neg = cli({"gen", "--sigma", "-1", "--noise-rel", "0.01", "--out", (dir / "p").string()});
  EXPECT_EQ(neg.code, 2);
  EXPECT_NE(neg.err.find("--sigma"), std::string::npos) << neg.err;
  EXPECT_FALSE(fs::exists(dir / "p"));
  const CliResult no_noise = cli({"gen", "--out", (dir / "p").string()});
  EXPECT_EQ(no_noise.code, 2);
  EXPECT_NE(no_noise.err.find("--noise"), std::string::npos);
  EXPECT_EQ(cli({"gen", "--noise-rel", "0.1", "--noise-abs", "0.1", "--out", (dir / "p").string()}).code, 2);
  EXPECT_EQ(cli({"gen", "--image", (dir / "missing.rg").string(), "--noise-rel", "0", "--out", (dir / "p").string()}).code,
            2);
}

TEST(Cli, HelpExitsZero) {
  const CliResult r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("sweep"), std::string::npos);
}

TEST(CliGen, WritesManifestAndFourGrids) {
  TempDir dir;
  const std::string out = (dir / "p1").string();
  const CliResult r = cli({"gen", "--kind", "blur", "--size", "64", "--sigma", "6", "--image", "geometric", "--noise-rel",
                           "0.01", "--seed", "7", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(listing(out), (std::set<std::string>{"manifest.toml", "psf.rg", "x_true.rg", "y_exact.rg", "y_delta.rg"}));
  EXPECT_EQ(r.out, slurp(fs::path(out) / "manifest.toml"));
  const TestProblem p = load_problem(out);
  EXPECT_NEAR((p.y_delta - p.y_exact).norm(), 0.01 * p.y_exact.norm(), 1e-12 * p.y_exact.norm());
}

TEST(CliGen, RerunIsByteIdentical) {
  TempDir dir;
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(cli({"gen", "--kind", "blur", "--size", "24", "--sigma", "2", "--image", "starfield", "--noise-rel", "0.05",
                   "--seed", "11", "--out", (dir / name).string()})
                  .code,
              0);
  }
  for (const auto& f : listing(dir / "a")) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  ASSERT_EQ(cli({"gen", "--kind", "blur", "--size", "24", "--sigma", "2", "--image", "starfield", "--noise-rel", "0.05",
                 "--seed", "12", "--out", (dir / "c").string()})
                .code,
            0);
  EXPECT_NE(slurp(dir / "a" / "y_delta.rg"), slurp(dir / "c" / "y_delta.rg"));
}

TEST(CliGen, OtherKindsAndAbsoluteNoise) {
  TempDir dir;
  ASSERT_EQ(cli({"gen", "--kind", "dense", "--n", "6", "--cond", "1e3", "--noise-abs", "0.001", "--out",
                 (dir / "d").string()})
                .code,
            0);
  const TestProblem d = load_problem(dir / "d");
  EXPECT_NEAR((d.y_delta - d.y_exact).norm(), 1e-3, 1e-15);
  EXPECT_TRUE(fs::exists(dir / "d" / "op.rg"));
  ASSERT_EQ(cli({"gen", "--kind", "diagonal", "--n", "5", "--noise-rel", "0", "--out", (dir / "g").string()}).code, 0);
  EXPECT_TRUE(fs::exists(dir / "g" / "sv.rg"));
  ASSERT_EQ(cli({"gen", "--kind", "toy", "--n", "4", "--noise-abs", "0", "--out", (dir / "t").string()}).code, 0);
  EXPECT_TRUE(load_problem(dir / "t").nl_op.has_value());
}

TEST(CliRecycle, PriorSolvesOnSigmaSixBlur) {
  TempDir dir;
  const std::string prob = (dir / "p").string();
  ASSERT_EQ(cli({"gen", "--kind", "blur", "--size", "64", "--sigma", "6", "--noise-rel", "0.01", "--seed", "7", "--out",
                 prob})
                .code,
            0);
  const CliResult r = cli({"recycle", "--problem", prob, "--strategy", "prior-solves", "--sigmas", "0.5:1.5:5", "--iters",
                           "2", "--out", (dir / "rs").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const RecycleSpace rs = load_recycle_space(dir / "rs", 64 * 64, 64 * 64);
  EXPECT_GE(rs.size(), 1u);
  EXPECT_LE(rs.size(), 10u);
  EXPECT_NE(r.out.find("k=" + std::to_string(rs.size())), std::string::npos) << r.out;
}

TEST(CliRecycle, EigenReportsPruning) {
  TempDir dir;
  const std::string prob = small_blur(dir);
  const CliResult r = cli({"recycle", "--problem", prob, "--strategy", "eigen", "--count", "37", "--out",
                           (dir / "rs").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex(R"(eigen: requested 37, kept (\d+), pruned (\d+))"))) << r.out;
  const std::size_t kept = std::stoul(m[1]);
  EXPECT_EQ(kept + std::stoul(m[2]), 37u);
  EXPECT_EQ(load_recycle_space(dir / "rs", 256, 256).size(), kept);
}

TEST(CliRecycle, FilesWithDuplicatesWarn) {
  TempDir dir;
  const std::string prob = small_blur(dir);
  const Vector v = Vector::LinSpaced(256, 0.0, 1.0);
  const Vector w = Vector::LinSpaced(256, 1.0, -1.0).cwiseProduct(v);
  write_rgrid(dir / "v1.rg", Grid::from_vector(v, 16, 16));
  write_rgrid(dir / "v2.rg", Grid::from_vector(v, 16, 16));
  write_rgrid(dir / "w.rg", Grid::from_vector(w, 16, 16));
  const CliResult r = cli({"recycle", "--problem", prob, "--strategy", "files", "--files", (dir / "v1.rg").string(),
                           (dir / "v2.rg").string(), (dir / "w.rg").string(), "--out", (dir / "rs").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning: dropped 1"), std::string::npos) << r.err;
  EXPECT_EQ(load_recycle_space(dir / "rs", 256, 256).size(), 2u);
}

TEST(CliRecycle, RankFailureNamesStrategy) {
  TempDir dir;
  const std::string prob = small_blur(dir);
  // with dropping disabled the duplicate reaches the QR step
  const std::string v = (fs::path(prob) / "x_true.rg").string();
  const CliResult r = cli({"recycle", "--problem", prob, "--strategy", "files", "--files", v, v, "--drop-tol", "0",
                           "--out", (dir / "rs").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("strategy files"), std::string::npos) << r.err;
}

TEST(CliRun, EmptySpaceMatchesPlainTraceBytes) {
  TempDir dir;
  const std::string prob = small_blur(dir);
  save_recycle_space(dir / "empty", RecycleSpace::empty(256, 256), 16, 16);
  for (const char* method : {"sd", "landweber"}) {
    const std::string m(method);
    ASSERT_EQ(cli({"run", "--problem", prob, "--method", m, "--max-iters", "60", "--out", (dir / ("plain" + m)).string()})
                  .code,
              0);
    const CliResult aug = cli({"run", "--problem", prob, "--method", m, "--recycle", (dir / "empty").string(),
                               "--max-iters", "60", "--out", (dir / ("aug" + m)).string()});
    ASSERT_EQ(aug.code, 0) << aug.err;
    EXPECT_EQ(slurp(dir / ("plain" + m) / "trace.csv"), slurp(dir / ("aug" + m) / "trace.csv")) << m;
  }
}

TEST(CliRun, OutputsAndDeterminism) {
  TempDir dir;
  const std::string prob = small_blur(dir);
  for (const char* out : {"r1", "r2"}) {
    const CliResult r =
        cli({"run", "--problem", prob, "--method", "cgne", "--max-iters", "30", "--out", (dir / out).string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("cgne: stop_iter="), std::string::npos) << r.out;
  }
  EXPECT_EQ(listing(dir / "r1"), (std::set<std::string>{"trace.csv", "x.rg", "run.toml"}));
  for (const char* f : {"trace.csv", "x.rg"}) EXPECT_EQ(slurp(dir / "r1" / f), slurp(dir / "r2" / f)) << f;
  const auto rows = csv_rows(slurp(dir / "r1" / "trace.csv"));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"iter", "residual_norm", "error_norm", "alpha", "stop"}));
  EXPECT_EQ(read_rgrid(dir / "r1" / "x.rg").rows, 16u);
}

TEST(CliRun, MethodCompatibility) {
  TempDir dir;
  const std::string prob = small_blur(dir);
  save_recycle_space(dir / "empty", RecycleSpace::empty(256, 256), 16, 16);
  const std::string out = (dir / "o").string();
  EXPECT_EQ(cli({"run", "--problem", prob, "--method", "aug-sd", "--out", out}).code, 2);
  EXPECT_EQ(cli({"run", "--problem", prob, "--method", "cgne", "--recycle", (dir / "empty").string(), "--out", out}).code,
            2);
  EXPECT_EQ(cli({"run", "--problem", prob, "--method", "nl-gd", "--out", out}).code, 2);
  EXPECT_EQ(cli({"run", "--problem", prob, "--method", "bogus", "--out", out}).code, 2);
  EXPECT_EQ(cli({"run", "--problem", prob, "--delta", "1", "--delta-rel", "0.1", "--out", out}).code, 2);
  EXPECT_EQ(cli({"run", "--problem", (dir / "nothing").string(), "--out", out}).code, 2);
}

TEST(CliRun, NonlinearWarnsAndWritesQrRank) {
  TempDir dir;
  const std::string prob = (dir / "t").string();
  ASSERT_EQ(cli({"gen", "--kind", "toy", "--n", "4", "--epsilon", "0.01", "--noise-abs", "0.001", "--seed", "2", "--out",
                 prob})
                .code,
            0);
  const CliResult gd = cli({"run", "--problem", prob, "--method", "nl-gd", "--max-iters", "50", "--out",
                            (dir / "gd").string()});
  ASSERT_EQ(gd.code, 0) << gd.err;
  EXPECT_NE(gd.err.find("experimental"), std::string::npos);
  ASSERT_EQ(cli({"recycle", "--problem", prob, "--strategy", "eigen", "--count", "2", "--out", (dir / "rs").string()}).code,
            0);
  const CliResult aug = cli({"run", "--problem", prob, "--method", "nl-aug-landweber", "--recycle",
                             (dir / "rs").string(), "--max-iters", "50", "--out", (dir / "aug").string()});
  ASSERT_EQ(aug.code, 0) << aug.err;
  EXPECT_EQ(csv_rows(slurp(dir / "aug" / "trace.csv"))[0].back(), "qr_rank");
}

TEST(CliCompare, SummaryLineAndCsv) {
  TempDir dir;
  const std::string prob = (dir / "p").string();
  ASSERT_EQ(cli({"gen", "--kind", "blur", "--size", "64", "--sigma", "6", "--noise-rel", "0.01", "--seed", "7", "--out",
                 prob})
                .code,
            0);
  ASSERT_EQ(cli({"recycle", "--problem", prob, "--strategy", "prior-solves", "--data", "exact", "--drop-tol", "1e-3",
                 "--out", (dir / "rs").string()})
                .code,
            0);
  const CliResult r = cli({"compare", "--problem", prob, "--recycle", (dir / "rs").string(), "--method", "sd",
                           "--max-iters", "100", "--out", (dir / "cmp").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(
      r.out, m,
      std::regex(R"(plain sd: discrepancy_stop=(\d+) semiconvergence=(\d+) \| augmented aug-sd \(k=(\d+)\): )"
                 R"(discrepancy_stop=(\d+) semiconvergence=(\d+))")))
      << r.out;
  EXPECT_LT(std::stoul(m[4]), std::stoul(m[1]));
  const auto rows = csv_rows(slurp(dir / "cmp" / "compare.csv"));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"iter", "plain_residual", "plain_error", "aug_residual", "aug_error"}));
  EXPECT_EQ(rows.size(), 102u);
  EXPECT_TRUE(fs::exists(dir / "cmp" / "x_plain.rg"));
  EXPECT_TRUE(fs::exists(dir / "cmp" / "x_aug.rg"));
  EXPECT_EQ(cli({"compare", "--problem", prob, "--out", (dir / "x").string()}).code, 2);
}

TEST(CliSweep, OneRowPerDeltaMonotoneOnDense) {
  const CliResult r = cli({"sweep", "--kind", "dense", "--n", "8", "--deltas", "1e-1,1e-2,1e-3,1e-4", "--method",
                           "landweber", "--recycle", "eigen", "--count", "2", "--threads", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"delta", "kappa_delta", "stop_iter", "final_error", "stop_reason"}));
  for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_LT(std::stod(rows[i][3]), std::stod(rows[i - 1][3]));
  const CliResult threaded = cli({"sweep", "--kind", "dense", "--n", "8", "--deltas", "1e-1,1e-2,1e-3,1e-4", "--method",
                                  "landweber", "--recycle", "eigen", "--count", "2", "--threads", "3"});
  EXPECT_EQ(threaded.out, r.out);
  EXPECT_EQ(cli({"sweep", "--deltas", "1e-3,1e-2"}).code, 2);
  EXPECT_EQ(cli({"sweep", "--method", "aug-sd"}).code, 2);
  EXPECT_EQ(cli({"sweep", "--method", "cgne"}).code, 2);
}

TEST(CliSweep, WritesFile) {
  TempDir dir;
  const CliResult r = cli({"sweep", "--kind", "diagonal", "--n", "6", "--deltas", "1e-2:1e-3:2", "--out",
                           (dir / "s.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(csv_rows(slurp(dir / "s.csv")).size(), 3u);
  EXPECT_NE(r.out.find("wrote 2 rows"), std::string::npos);
}

TEST(CliInspect, ProblemSpaceAndGrid) {
  TempDir dir;
  const std::string prob = small_blur(dir);
  const CliResult p = cli({"inspect", prob});
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_NE(p.out.find("dim_domain = 256"), std::string::npos);
  EXPECT_NE(p.out.find("norm_T = "), std::string::npos);
  ASSERT_EQ(cli({"recycle", "--problem", prob, "--strategy", "eigen", "--count", "3", "--out", (dir / "rs").string()}).code,
            0);
  const CliResult s = cli({"inspect", (dir / "rs").string()});
  EXPECT_EQ(s.code, 0);
  EXPECT_NE(s.out.find("recycle space: k = 3"), std::string::npos) << s.out;
  save_recycle_space(dir / "empty", RecycleSpace::empty(256, 256), 16, 16);
  EXPECT_NE(cli({"inspect", (dir / "empty").string()}).out.find("k = 0"), std::string::npos);
  const CliResult g = cli({"inspect", (fs::path(prob) / "x_true.rg").string()});
  EXPECT_NE(g.out.find("grid: 16 x 16"), std::string::npos);
  EXPECT_EQ(cli({"inspect", (dir / "nothing").string()}).code, 2);
}

TEST(CliErrors, CorruptProblemIsRuntimeFailure) {
  TempDir dir;
  const std::string prob = small_blur(dir);
  fs::remove(fs::path(prob) / "y_delta.rg");
  const CliResult r = cli({"run", "--problem", prob, "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}
