#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "slelab/cli.hpp"

using namespace slelab;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result call(std::vector<std::string> args)
{
    args.insert(args.begin(), "sle_lab");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch_dir(const std::string& name)
{
    const fs::path d = fs::temp_directory_path() / ("sle_lab_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

const std::string kDefaultCfg = std::string(SLELAB_SOURCE_DIR) + "/configs/default.cfg";

}  // namespace

TEST(Cli, HelpExitsZero)
{
    const Result r = call({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("Usage"), std::string::npos);
    EXPECT_NE(r.out.find("martingale"), std::string::npos);
    EXPECT_EQ(call({"mstar", "--help"}).code, 0);
}

TEST(Cli, UnknownFlagIsUsageError)
{
    const Result r = call({"martingale", "--frobnicate"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err.rfind("ERROR: unknown flag", 0), 0u);
    EXPECT_EQ(call({}).code, 2);
    EXPECT_EQ(call({"martingale", "--format", "xml"}).code, 2);
}

TEST(Cli, MartingaleReportIsByteIdenticalAcrossRuns)
{
    const std::vector<std::string> args = {"martingale", "--config", kDefaultCfg, "--seed", "7",
                                           "--samples", "8"};
    const Result a = call(args);
    const Result b = call(args);
    EXPECT_LE(a.code, 1);
    EXPECT_EQ(a.out, b.out);
    for (const char* key : {"\"mean\"", "\"stderr\"", "\"n\"", "\"discards\"", "\"pass\""}) {
        EXPECT_NE(a.out.find(key), std::string::npos) << key;
    }
    auto args2 = args;
    args2.insert(args2.end(), {"--workers", "2"});
    EXPECT_EQ(call(args2).out, a.out);
}

TEST(Cli, OutputDirectoryFiles)
{
    const fs::path d = scratch_dir("out");
    const Result r = call({"martingale", "--config", kDefaultCfg, "--samples", "4", "--out",
                           d.string(), "--svg", "--dump-samples", "--grid", "--format", "csv"});
    ASSERT_LE(r.code, 1) << r.err;
    EXPECT_EQ(slurp(d / "martingale.csv"), r.out);
    EXPECT_EQ(slurp(d / "martingale_samples.csv").rfind("sample,t1,t2,M,MaxHeight\n", 0), 0u);
    EXPECT_EQ(slurp(d / "martingale_grid.csv")
                  .rfind("t1,t2,A10,A11,A12,A13,A20,A21,A22,A23,E,N,I,M,valid\n", 0),
              0u);
    const std::string svg = slurp(d / "martingale.svg");
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_NE(svg.find("<polyline"), std::string::npos);
    EXPECT_NE(slurp(d / "run.log").find("wall_seconds="), std::string::npos);
}

TEST(Cli, TraceExport)
{
    const fs::path d = scratch_dir("trace");
    const Result r = call({"trace", "--kappa", "3", "--seed", "2", "--out", d.string(), "--svg",
                           "--format", "csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("t,re,im\n0,0,0\n", 0), 0u);
    EXPECT_TRUE(fs::exists(d / "trace.svg"));
    EXPECT_TRUE(fs::exists(d / "trace.json"));
}

TEST(Cli, ExitCodes)
{
    const fs::path d = scratch_dir("codes");
    std::ofstream(d / "abort.cfg") << "floor_guard = 0.999\nsamples = 5\n";
    EXPECT_EQ(call({"martingale", "--config", (d / "abort.cfg").string()}).code, 3);
    std::ofstream(d / "strict.cfg") << "stderr_max = 1e-12\nsamples = 5\n";
    EXPECT_EQ(call({"martingale", "--config", (d / "strict.cfg").string()}).code, 1);
    std::ofstream(d / "bad.cfg") << "kappa = 2\nunknown_key = 3\n";
    const Result r = call({"martingale", "--config", (d / "bad.cfg").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err.rfind("ERROR:", 0), 0u);
    EXPECT_EQ(call({"identities", "--kappa", "-1"}).code, 2);
    EXPECT_EQ(call({"martingale", "--config", "/nonexistent.cfg"}).code, 2);
}

TEST(Config, ParsesKeysCommentsAndPairs)
{
    std::istringstream in(R"(# comment
kappa = 3   # trailing comment
x1 = -1
x2 = 1
samples = 12
pair = halfdisk -1 0.3 ; halfdisk 1 0.4
pair = polygon -1.3,0 -1,0.5 -0.7,0 ; halfdisk 1 0.2
observables = MaxHeight, LineCrossLeftmost:0.1
format = csv
svg = true
)");
    const RunConfig rc = parse_config(in);
    EXPECT_EQ(rc.experiment.kappa, 3.0);
    EXPECT_EQ(rc.experiment.n_samples, 12u);
    ASSERT_EQ(rc.experiment.hull_pairs.size(), 2u);
    EXPECT_FALSE(rc.experiment.hull_pairs[1].first.is_half_disk());
    EXPECT_EQ(rc.experiment.observables.size(), 2u);
    EXPECT_EQ(rc.format, "csv");
    EXPECT_TRUE(rc.svg);
    EXPECT_NO_THROW(rc.experiment.validate());
}

TEST(Config, RejectsMalformedInput)
{
    for (const char* text : {"kappa 3\n", "kappa = abc\n", "samples = 2.5\n", "nope = 1\n",
                             "pair = halfdisk 0 0.3\n", "pair = circle 0 1 ; halfdisk 1 0.3\n",
                             "format = xml\n", "svg = maybe\n", "observables = Foo\n"}) {
        std::istringstream in(text);
        EXPECT_THROW(parse_config(in), ConfigError) << text;
    }
}

TEST(Svg, FixedViewport)
{
    const std::string s = svg_figure(0.0, 1.0, {{{0.0, 0.0}, {0.0, 2.0}}}, {});
    // Width 3 units -> 800 px; height 2 units.
    EXPECT_NE(s.find("viewBox=\"0 0 800 533.333\""), std::string::npos) << s;
    EXPECT_NE(s.find("266.667,533.333 266.667,0"), std::string::npos) << s;
}
