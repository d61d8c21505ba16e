#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args)
{
    const std::string cmd = std::string(ECFEM_CLI_PATH) + " " + args + " 2>/dev/null";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) r.out += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path temp_path(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("ecfem_cli_" + std::to_string(::getpid()) + "_" + name);
}

} // namespace

TEST(Cli, GammaWritesKColumns)
{
    const Result r = run("gamma --domain lshape --order 2 --levels 2..4 --correction layer");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("level,h,gamma_1,gamma_2,residual"), std::string::npos);
    EXPECT_NE(r.out.find("\nfit,"), std::string::npos);
    const Result f = run("gamma --domain lshape --order 2 --levels 2..4 --correction function");
    ASSERT_EQ(f.code, 0);
    EXPECT_NE(f.out.find("gamma_2,residual"), std::string::npos);
}

TEST(Cli, SlitOrderFourHasFourGammas)
{
    const Result r = run("gamma --domain slit --order 4 --levels 3..3 --correction function");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("gamma_4,residual"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitWithTwo)
{
    EXPECT_EQ(run("converge --domain lshape --order 2 --levels 2..3 --gamma 0.1,0.2,0.3").code, 2);
    EXPECT_EQ(run("spectrum --domain lshape --order 2 --levels 2..3 --gamma 0.1").code, 2);
    EXPECT_EQ(run("converge --domain square").code, 2);
    EXPECT_EQ(run("converge --levels 3..2").code, 2);
    EXPECT_EQ(run("converge --order 2 --levels 2..8").code, 2);
    EXPECT_EQ(run("converge --gamma @/nonexistent/file.csv --levels 2..2").code, 2);
    EXPECT_EQ(run("--bogus").code, 2);
}

TEST(Cli, NumericalFailureExitsWithThree)
{
    // |gamma| >= 1 violates ellipticity of the layer correction
    EXPECT_EQ(run("converge --domain lshape --order 2 --levels 2..2 --gamma 1.5,0").code, 3);
}

TEST(Cli, ConvergeTableAndDeterminism)
{
    const auto a = temp_path("a.csv"), b = temp_path("b.csv");
    const std::string args = "converge --domain pacman --order 2 --levels 2..4 --gamma 0.02,0.01 --out ";
    ASSERT_EQ(run(args + a.string()).code, 0);
    ASSERT_EQ(run(args + b.string()).code, 0);
    const std::string sa = slurp(a);
    EXPECT_NE(sa.find("level,h,dofs,err_L2,rate_L2,err_L2a,rate_L2a,err_H1a,rate_H1a"), std::string::npos);
    EXPECT_NE(sa.find("alpha=1.42857"), std::string::npos);
    EXPECT_EQ(sa, slurp(b));
    std::filesystem::remove(a);
    std::filesystem::remove(b);
}

TEST(Cli, ConfigFileAndOverride)
{
    const auto cfg = temp_path("run.cfg");
    {
        std::ofstream o(cfg);
        o << "domain=slit\norder=1\nlevels=2..3\ncorrection=none\ngamma=0\n";
    }
    const Result r = run("converge --config " + cfg.string());
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("domain=slit"), std::string::npos);
    const Result o = run("converge --config " + cfg.string() + " --domain lshape");
    ASSERT_EQ(o.code, 0);
    EXPECT_NE(o.out.find("domain=lshape"), std::string::npos);
    std::filesystem::remove(cfg);
}

TEST(Cli, GammaFileFeedsConverge)
{
    const auto g = temp_path("gamma.csv");
    ASSERT_EQ(run("gamma --domain lshape --order 2 --levels 2..4 --out " + g.string()).code, 0);
    const Result r = run("converge --domain lshape --order 2 --levels 2..3 --gamma @" + g.string());
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("correction=layer gamma=0.03"), std::string::npos);
    std::filesystem::remove(g);
}

TEST(Cli, SpectrumWithZeroGammaIsOne)
{
    const Result r = run("spectrum --domain pacman --order 2 --levels 2..2 --gamma 0");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("\n2,1,1,"), std::string::npos);
}

TEST(Cli, OrthoMode)
{
    const Result r = run("converge --domain lshape --order 2 --levels 1..2 --ortho");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("level,i,j,ortho,ortho_relative,mixed"), std::string::npos);
    EXPECT_NE(r.out.find("\n2,1,3,"), std::string::npos);
}

TEST(Cli, RecipesParse)
{
    for (const auto& e : std::filesystem::directory_iterator(ECFEM_RECIPE_DIR)) {
        // a level range of 1..1 keeps every recipe cheap while still validating its keys
        const Result r = run("mesh --config " + e.path().string() + " --levels 1..1");
        EXPECT_EQ(r.code, 0) << e.path();
    }
}
