#include "cex/cli.hpp"
#include "fixtures.hpp"

#include <fstream>
#include <gtest/gtest.h>
#include <sstream>

using namespace cex;
using namespace cex::testing;

namespace {

struct Outcome
{
    int code;
    std::string out, err;
};

Outcome run_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "cexfind");
    std::vector<const char *> argv;
    for (const auto &a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = cli_main(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> compare(const std::string &q1, const std::string &q2, std::vector<std::string> extra = {})
{
    auto d = data_dir("school");
    std::vector<std::string> args{"compare", "--schema", (d / "schema.json").string(), "--data", d.string(),
                                  "--q1", (d / q1).string(), "--q2", (d / q2).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

std::filesystem::path scratch(const std::string &name)
{
    auto dir = std::filesystem::temp_directory_path() / "cex-cli-test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path &p)
{
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t count(const std::string &text, const std::string &needle)
{
    std::size_t n = 0;
    for (auto at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
    return n;
}

}

TEST(Cli, JsonReportOfRunningExample)
{
    auto r = run_cli(compare("q1.ra", "q2.ra", {"--format", "json"}));
    ASSERT_EQ(r.code, ExitFound) << r.err;
    auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["verdict"], "counterexample");
    EXPECT_EQ(j["counterexample"]["size"], 3);
    EXPECT_TRUE(j["counterexample"]["verified"]);
    for (auto phase : {"raw_eval", "prov_eval", "solve"}) EXPECT_GE(j["timings_ms"][phase].get<double>(), 0.0);

    auto db = load_fixture("school");
    auto c = counterexample_from_json(j, db);
    EXPECT_EQ(c.ids, ids(db, {"t1", "t4", "t5"}));
    EXPECT_EQ(c.strategy, j["strategy"]);
}

TEST(Cli, TableAndJsonShowTheSameCounterexample)
{
    for (auto strategy : {"auto", "basic", "opt_sigma", "brute_force"}) {
        auto js = run_cli(compare("q1.ra", "q2.ra", {"--format", "json", "--strategy", strategy}));
        auto table = run_cli(compare("q1.ra", "q2.ra", {"--strategy", strategy}));
        ASSERT_EQ(js.code, ExitFound);
        ASSERT_EQ(table.code, ExitFound);
        auto j = nlohmann::json::parse(js.out);
        auto n = j["counterexample"]["size"].get<std::size_t>();
        EXPECT_NE(table.out.find("counterexample of " + std::to_string(n) + " tuples"), std::string::npos) << strategy;
        for (const auto &alias : j["counterexample"]["ids"])
            EXPECT_NE(table.out.find("| " + alias.get<std::string>() + " "), std::string::npos) << strategy;
        EXPECT_NE(table.out.find("Q1 result"), std::string::npos);
        EXPECT_NE(table.out.find("Q2 result"), std::string::npos);
    }
}

TEST(Cli, IdenticalQueriesAgree)
{
    auto r = run_cli(compare("q1.ra", "q1.ra"));
    EXPECT_EQ(r.code, ExitAgree);
    EXPECT_NE(r.err.find("queries agree on the test database"), std::string::npos);
    auto j = run_cli(compare("q2.ra", "q2.ra", {"--format", "json"}));
    EXPECT_EQ(j.code, ExitAgree);
    EXPECT_EQ(nlohmann::json::parse(j.out)["verdict"], "agree");
}

TEST(Cli, EmitSmt)
{
    auto path = scratch("witness.smt2");
    std::filesystem::remove(path);
    auto r = run_cli(compare("q1.ra", "q2.ra", {"--emit-smt", path.string()}));
    ASSERT_EQ(r.code, ExitFound) << r.err;
    auto text = slurp(path);
    EXPECT_NE(text.find("(define-fun b2i ((x Bool)) Int (ite x 1 0))\n"), std::string::npos);
    EXPECT_EQ(count(text, "(minimize "), 1u);
    EXPECT_EQ(count(text, "(declare-const t"), 11u);

    auto param = scratch("param.smt2");
    r = run_cli(compare("param_q1.ra", "param_q2.ra", {"--parameterize", "--param", "num_CS=3", "--emit-smt", param.string()}));
    ASSERT_EQ(r.code, ExitFound) << r.err;
    text = slurp(param);
    EXPECT_NE(text.find("(declare-const num_CS Int)\n"), std::string::npos);
    EXPECT_EQ(count(text, "(minimize "), 1u);
}

TEST(Cli, ParameterizedAggregates)
{
    auto fixed = run_cli(compare("param_q1.ra", "param_q2.ra", {"--param", "num_CS=3", "--strategy", "agg_basic", "--format", "json"}));
    ASSERT_EQ(fixed.code, ExitFound) << fixed.err;
    EXPECT_EQ(nlohmann::json::parse(fixed.out)["counterexample"]["size"], 4);
    auto free = run_cli(compare("param_q1.ra", "param_q2.ra",
                                {"--param", "num_CS=3", "--strategy", "agg_param", "--format", "json"}));
    ASSERT_EQ(free.code, ExitFound) << free.err;
    auto j = nlohmann::json::parse(free.out);
    EXPECT_EQ(j["counterexample"]["size"], 2);
    EXPECT_EQ(j["counterexample"]["params"]["num_CS"], 1);
}

TEST(Cli, UsageErrors)
{
    EXPECT_EQ(run_cli({}).code, ExitUsage);
    EXPECT_EQ(run_cli(compare("q1.ra", "missing.ra")).code, ExitUsage);
    EXPECT_EQ(run_cli(compare("q1.ra", "q2.ra", {"--strategy", "magic"})).code, ExitUsage);
    EXPECT_EQ(run_cli(compare("q1.ra", "q2.ra", {"--format", "xml"})).code, ExitUsage);
    EXPECT_EQ(run_cli(compare("q1.ra", "q2.ra", {"--max-trials", "0"})).code, ExitUsage);
    EXPECT_EQ(run_cli(compare("q1.ra", "q2.ra", {"--param", "num_CS"})).code, ExitUsage);
    EXPECT_EQ(run_cli(compare("q1.ra", "q2.ra", {"--solver", "external"})).code, ExitUsage);
    auto missing = run_cli(compare("param_q1.ra", "param_q2.ra"));
    EXPECT_EQ(missing.code, ExitUsage);
    EXPECT_NE(missing.err.find("--param"), std::string::npos);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, SyntaxErrorIsReportedWithPosition)
{
    auto bad = scratch("bad.ra");
    std::ofstream(bad) << "project[name](\n  select[dept=](Registration))";
    auto d = data_dir("school");
    auto r = run_cli({"compare", "--schema", (d / "schema.json").string(), "--data", d.string(), "--q1",
                      (d / "q1.ra").string(), "--q2", bad.string()});
    EXPECT_EQ(r.code, ExitUsage);
    EXPECT_NE(r.err.find("syntax error at 2:"), std::string::npos) << r.err;
}

TEST(Cli, Timeout)
{
    auto r = run_cli(compare("q1.ra", "q2.ra", {"--timeout", "0", "--strategy", "opt_sigma"}));
    EXPECT_EQ(r.code, ExitTimeout);
    EXPECT_NE(r.err.find("timeout"), std::string::npos);
}

TEST(Cli, SearchFailureHasItsOwnCode)
{
    auto r = run_cli(compare("q1.ra", "q2.ra", {"--strategy", "brute_force", "--brute-cap", "4"}));
    EXPECT_EQ(r.code, ExitSearchFailed);
    EXPECT_FALSE(r.err.empty());
}
