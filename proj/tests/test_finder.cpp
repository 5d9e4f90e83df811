#include "cex/error.hpp"
#include "cex/finder.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <chrono>

using namespace cex;
using namespace cex::testing;

namespace {

const std::vector<std::vector<const char *>> smallest_running = {
    {"t1", "t4", "t5"}, {"t3", "t9", "t10"}, {"t3", "t9", "t11"}, {"t3", "t10", "t11"}};

bool is_running_optimum(const Database &db, const IdSet &s)
{
    for (const auto &aliases : smallest_running) {
        IdSet want;
        for (auto a : aliases) want.insert(tid(db, a));
        if (want == s) return true;
    }
    return false;
}

TypedQuery typed(const Database &db, const std::string &text) { return type_check(parse_query(text), db); }

struct AggExample
{
    Database db;
    TypedQuery q1, q2;

    AggExample(const std::string &fixture, const std::string &f1, const std::string &f2)
        : db(load_fixture(fixture))
        , q1(type_check(load_query(fixture, f1), db))
        , q2(type_check(load_query(fixture, f2), db))
    { }
};

}

TEST(Finder, RunningExampleExactness)
{
    RunningExample ex;
    auto start = std::chrono::steady_clock::now();
    for (auto *fn : {&basic, &fastpath, &brute_force}) {
        auto c = fn(ex.db, ex.q1, ex.q2, {}, nullptr);
        EXPECT_EQ(c.size(), 3u) << c.strategy;
        EXPECT_TRUE(c.verified) << c.strategy;
        EXPECT_TRUE(is_running_optimum(ex.db, c.ids)) << c.strategy;
        EXPECT_EQ(c.ids, ids(ex.db, {"t1", "t4", "t5"})) << c.strategy;
    }
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1.0);
}

TEST(Finder, OptSigmaPicksFirstDifferingTuple)
{
    RunningExample ex;
    auto c = opt_sigma(ex.db, ex.q1, ex.q2);
    ASSERT_TRUE(c.witness_tuple);
    EXPECT_EQ(*c.witness_tuple, (Tuple{"Jesse", "CS"}));
    EXPECT_EQ(c.ids, ids(ex.db, {"t3", "t9", "t10"}));
    EXPECT_TRUE(c.verified);
}

TEST(Finder, LegacyEnumerationNeverBeatsOptimizer)
{
    RunningExample ex;
    FinderOptions legacy;
    legacy.legacy_enumerate = true;
    auto naive = basic(ex.db, ex.q1, ex.q2, legacy);
    auto opt = basic(ex.db, ex.q1, ex.q2);
    EXPECT_GE(naive.size(), opt.size());
    EXPECT_TRUE(naive.verified);
    legacy.max_trials = 1;
    EXPECT_GE(basic(ex.db, ex.q1, ex.q2, legacy).size(), opt.size());
}

TEST(Finder, IdenticalQueriesAgree)
{
    RunningExample ex;
    for (auto *fn : {&basic, &opt_sigma, &fastpath, &brute_force})
        EXPECT_THROW(fn(ex.db, ex.q2, ex.q2, {}, nullptr), QueriesAgree);
    auto rep = find(ex.db, ex.q1, ex.q1);
    EXPECT_TRUE(rep.agree);
    EXPECT_EQ(to_json(rep, ex.db)["verdict"], "agree");
}

TEST(Finder, SelectJoinFastPath)
{
    auto db = load_fixture("school");
    auto q1 = typed(db, "Student join Registration");
    auto q2 = typed(db, "select[dept='none'](Student join Registration)");
    EXPECT_EQ(fastpath_class(q1, q2), "SJ");
    auto c = fastpath(db, q1, q2);
    EXPECT_EQ(c.strategy, "fastpath(SJ)");
    EXPECT_EQ(c.ids, ids(db, {"t1", "t4"}));
    EXPECT_EQ(brute_force(db, q1, q2).size(), 2u);
    EXPECT_EQ(opt_sigma(db, q1, q2).size(), 2u);
}

TEST(Finder, ProjectUnionFastPath)
{
    auto db = load_fixture("school");
    auto q1 = typed(db, "project[name](Registration) union project[name](Student)");
    auto q2 = typed(db, "project[name](select[dept='ECON'](Registration))");
    EXPECT_EQ(fastpath_class(q1, q2), "SPU");
    auto c = fastpath(db, q1, q2);
    EXPECT_EQ(c.size(), 1u);
    EXPECT_EQ(c.size(), brute_force(db, q1, q2).size());
}

TEST(Finder, ProjectJoinPairIsNotEligible)
{
    auto db = load_fixture("school");
    auto q1 = typed(db, "project[major](Student join Registration)");
    auto q2 = typed(db, "project[name](Student join Registration)");
    EXPECT_FALSE(fastpath_class(q1, q2));
    EXPECT_THROW(fastpath(db, q1, q2), NotEligible);
    auto rep = find(db, q1, q2);
    EXPECT_EQ(rep.counterexample.strategy, "opt_sigma");
    EXPECT_EQ(rep.optimum_guarantee, "per-tuple");
}

TEST(Finder, AutoUsesDifferenceFastPath)
{
    RunningExample ex;
    EXPECT_EQ(fastpath_class(ex.q1, ex.q2), "SPJUD*");
    auto rep = find(ex.db, ex.q1, ex.q2);
    EXPECT_FALSE(rep.agree);
    EXPECT_EQ(rep.counterexample.strategy, "fastpath(SPJUD*)");
    EXPECT_EQ(rep.counterexample.size(), 3u);
    EXPECT_TRUE(rep.counterexample.verified);
    EXPECT_EQ(rep.optimum_guarantee, "global");
    EXPECT_TRUE(rep.q1_result.rows.empty());
    EXPECT_EQ(rep.q2_result.rows, (std::vector<Tuple>{{"Mary", "CS"}}));
}

TEST(Finder, FastPathFallsBackWhenUnionCapIsHit)
{
    RunningExample ex;
    FinderOptions o;
    o.union_cap = 1;
    EXPECT_THROW(fastpath(ex.db, ex.q1, ex.q2, o), CapExceeded);
    auto rep = find(ex.db, ex.q1, ex.q2, o);
    EXPECT_EQ(rep.counterexample.strategy, "opt_sigma");
    EXPECT_EQ(rep.counterexample.size(), 3u);
}

TEST(Finder, BruteForceCap)
{
    RunningExample ex;
    FinderOptions o;
    o.brute_cap = 10;
    EXPECT_THROW(brute_force(ex.db, ex.q1, ex.q2, o), CapExceeded);
}

TEST(Finder, BudgetExhaustion)
{
    RunningExample ex;
    FinderOptions o;
    o.timeout_seconds = 0;
    EXPECT_THROW(basic(ex.db, ex.q1, ex.q2, o), Timeout);
    EXPECT_THROW(opt_sigma(ex.db, ex.q1, ex.q2, o), Timeout);
}

TEST(Finder, ForeignKeyChainClosure)
{
    auto db = load_fixture("chain");
    auto q1 = typed(db, "project[a](A)");
    auto q2 = typed(db, "project[a](select[a<>100](A))");
    for (auto *fn : {&basic, &opt_sigma, &fastpath, &brute_force}) {
        auto c = fn(db, q1, q2, {}, nullptr);
        EXPECT_EQ(c.size(), 3u) << c.strategy;
        EXPECT_TRUE(c.verified) << c.strategy;
        EXPECT_TRUE(check_constraints(restrict(db, c.ids)).ok()) << c.strategy;
    }
}

TEST(Finder, Deterministic)
{
    RunningExample ex;
    for (auto s : {Strategy::Basic, Strategy::OptSigma, Strategy::Fastpath, Strategy::BruteForce}) {
        FinderOptions o;
        o.strategy = s;
        auto a = find(ex.db, ex.q1, ex.q2, o), b = find(ex.db, ex.q1, ex.q2, o);
        EXPECT_EQ(a.counterexample.ids, b.counterexample.ids);
        EXPECT_EQ(a.counterexample.witness_tuple, b.counterexample.witness_tuple);
    }
}

TEST(Aggregates, SingleTupleCounterexample)
{
    AggExample ex("registration_only", "q1.ra", "q2.ra");
    auto c = agg_basic(ex.db, ex.q1, ex.q2, false);
    EXPECT_EQ(c.ids, ids(ex.db, {"t6"}));
    EXPECT_TRUE(c.verified);
    EXPECT_EQ(brute_force(ex.db, ex.q1, ex.q2).ids, ids(ex.db, {"t6"}));
}

TEST(Aggregates, ThresholdWithoutParameters)
{
    AggExample ex("school", "param_q1.ra", "param_q2.ra");
    FinderOptions o;
    o.params = {{"num_CS", 3}};
    auto c = agg_basic(ex.db, ex.q1, ex.q2, false, o);
    EXPECT_EQ(c.ids, ids(ex.db, {"t1", "t4", "t5", "t6"}));
    EXPECT_EQ(c.param_setting, (ParamAssignment{{"num_CS", 3}}));
    EXPECT_TRUE(c.verified);
}

TEST(Aggregates, ThresholdParameterized)
{
    AggExample ex("school", "param_q1.ra", "param_q2.ra");
    FinderOptions o;
    o.params = {{"num_CS", 3}};
    o.strategy = Strategy::AggParam;
    auto rep = find(ex.db, ex.q1, ex.q2, o);
    EXPECT_EQ(rep.counterexample.ids, ids(ex.db, {"t1", "t6"}));
    EXPECT_EQ(rep.counterexample.param_setting, (ParamAssignment{{"num_CS", 1}}));
    EXPECT_TRUE(rep.counterexample.verified);
    EXPECT_EQ(rep.q2_result.rows, (std::vector<Tuple>{{"Mary", 95}}));

    o.parameterize = true;
    auto oracle = brute_force(ex.db, ex.q1, ex.q2, o);
    EXPECT_EQ(oracle.size(), 2u);
    EXPECT_EQ(oracle.ids, rep.counterexample.ids);
}

TEST(Aggregates, ConstantThresholdMatchesOracle)
{
    AggExample ex("school", "having_q1.ra", "having_q2.ra");
    EXPECT_EQ(agg_basic(ex.db, ex.q1, ex.q2, false).ids, ids(ex.db, {"t1", "t4", "t5", "t6"}));
    EXPECT_EQ(brute_force(ex.db, ex.q1, ex.q2).size(), 4u);
}

TEST(Aggregates, HeuristicOnAverages)
{
    AggExample ex("school", "avg_q1.ra", "avg_q2.ra");
    auto c = agg_heuristic(ex.db, ex.q1, ex.q2);
    EXPECT_EQ(c.ids, ids(ex.db, {"t2", "t8"}));
    EXPECT_EQ(c.attempts, 1u);
    EXPECT_TRUE(c.verified);
    auto rep = find(ex.db, ex.q1, ex.q2);
    EXPECT_EQ(rep.counterexample.strategy, "agg_heuristic");
    EXPECT_EQ(rep.optimum_guarantee, "none");
}

TEST(Aggregates, HeuristicSetsFreedParameter)
{
    AggExample ex("school", "param_q1.ra", "param_q2.ra");
    FinderOptions o;
    o.params = {{"num_CS", 3}};
    auto c = agg_heuristic(ex.db, ex.q1, ex.q2, o);
    EXPECT_EQ(c.ids, ids(ex.db, {"t2", "t8"}));
    EXPECT_EQ(c.param_setting, (ParamAssignment{{"num_CS", 1}}));
}

TEST(Aggregates, HeuristicRetriesUntilResultsDiffer)
{
    AggExample ex("counts", "q1.ra", "q2.ra");
    auto c = agg_heuristic(ex.db, ex.q1, ex.q2);
    EXPECT_GE(c.attempts, 2u);
    EXPECT_TRUE(c.verified);
    EXPECT_EQ(c.size(), 3u);

    // A fixed threshold of three makes the small Q′ witnesses useless; the loop walks to Mary's four tuples.
    AggExample having("school", "having_q1.ra", "having_q2.ra");
    auto h = agg_heuristic(having.db, having.q1, having.q2);
    EXPECT_GT(h.attempts, 2u);
    EXPECT_EQ(h.ids, ids(having.db, {"t1", "t4", "t5", "t6"}));
    FinderOptions tight;
    tight.heuristic_retries = 2;
    EXPECT_THROW(agg_heuristic(having.db, having.q1, having.q2, tight), RetriesExhausted);
}

TEST(Aggregates, HeuristicEligibility)
{
    auto db = load_fixture("school");
    auto avg = type_check(load_query("school", "avg_q1.ra"), db);
    auto max = typed(db, "groupby[name; MAX(grade) as avg_grade](Student join Registration)");
    EXPECT_THROW(agg_heuristic(db, avg, max), NotHeuristicEligible);
    auto plain = typed(db, "project[name](Student)");
    auto count = typed(db, "project[name](groupby[name; COUNT(*) as n](Registration))");
    EXPECT_THROW(agg_heuristic(db, plain, count), NotHeuristicEligible);
    // The dispatcher falls back to group constraints.
    auto rep = find(db, avg, max);
    EXPECT_EQ(rep.counterexample.strategy, "agg_basic");
    EXPECT_TRUE(rep.counterexample.verified);
}

TEST(Aggregates, ParameterizationNeverLarger)
{
    AggExample ex("school", "param_q1.ra", "param_q2.ra");
    for (std::int64_t n : {1, 2, 3, 4}) {
        FinderOptions o;
        o.params = {{"num_CS", n}};
        std::size_t fixed_size = SIZE_MAX;
        try {
            fixed_size = agg_basic(ex.db, ex.q1, ex.q2, false, o).size();
        } catch (const QueriesAgree &) {
        }
        EXPECT_LE(agg_basic(ex.db, ex.q1, ex.q2, true, o).size(), fixed_size) << n;
    }
}

TEST(Report, JsonShape)
{
    RunningExample ex;
    auto rep = find(ex.db, ex.q1, ex.q2);
    auto j = to_json(rep, ex.db);
    EXPECT_EQ(j["verdict"], "counterexample");
    EXPECT_EQ(j["strategy"], "fastpath(SPJUD*)");
    EXPECT_EQ(j["counterexample"]["size"], 3);
    EXPECT_EQ(j["counterexample"]["ids"], nlohmann::json({"t1", "t4", "t5"}));
    EXPECT_EQ(j["counterexample"]["tuples"]["Student"]["rows"], nlohmann::json::parse(R"([["Mary","CS"]])"));
    EXPECT_EQ(j["counterexample"]["tuples"]["Registration"]["ids"], nlohmann::json({"t4", "t5"}));
    EXPECT_EQ(j["counterexample"]["tuples"]["Registration"]["rows"][0], nlohmann::json::parse(R"(["Mary","216","CS",100])"));
    EXPECT_EQ(j["q2_result"]["columns"], nlohmann::json({"name", "major"}));
    EXPECT_TRUE(j["q1_result"]["rows"].empty());
    for (const char *k : {"raw_eval", "prov_eval", "solve"}) EXPECT_TRUE(j["timings_ms"][k].is_number());
    // Ids parse back to the same subinstance.
    IdSet back;
    for (const auto &a : j["counterexample"]["ids"]) back.insert(*ex.db.parse_id(a.get<std::string>()));
    EXPECT_EQ(back, rep.counterexample.ids);
    auto reparsed = nlohmann::json::parse(j.dump());
    EXPECT_EQ(reparsed, j);
}

TEST(Report, AverageRendersAsNumber)
{
    AggExample ex("school", "avg_q1.ra", "avg_q2.ra");
    FinderOptions o;
    o.strategy = Strategy::AggBasic;
    auto j = to_json(find(ex.db, ex.q1, ex.q2, o), ex.db);
    EXPECT_TRUE(j["q2_result"]["rows"][0][1].is_number());
}

TEST(Strategy, Names)
{
    for (auto s : {Strategy::Auto, Strategy::Basic, Strategy::OptSigma, Strategy::AggBasic, Strategy::AggParam,
                   Strategy::AggHeuristic, Strategy::Fastpath, Strategy::BruteForce})
        EXPECT_EQ(parse_strategy(to_string(s)), s);
    EXPECT_FALSE(parse_strategy("fast"));
}
