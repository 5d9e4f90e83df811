#include "cex/agg_prov.hpp"
#include "cex/error.hpp"
#include "cex/eval.hpp"
#include "cex/solver.hpp"
#include "fixtures.hpp"
#include "random_prov.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace cex;
using namespace cex::testing;

namespace {

/// Minimum model by enumerating all assignments in increasing size, then lexicographic order.
std::optional<IdSet> brute_minimum(const MinOnesProblem &p)
{
    auto vars = problem_variables(p);
    std::optional<IdSet> best;
    for (unsigned mask = 0; mask < (1u << vars.size()); ++mask) {
        IdSet s;
        for (std::size_t i = 0; i < vars.size(); ++i)
            if (mask & (1u << i)) s.insert(vars[i]);
        if (not satisfies(p, s)) continue;
        if (not best or s.size() < best->size() or
            (s.size() == best->size() and std::lexicographical_compare(s.begin(), s.end(), best->begin(), best->end())))
            best = s;
    }
    return best;
}

Prov example_41(ProvStore &s, const Database &db)
{
    auto v = [&](const char *a) { return s.var(tid(db, a)); };
    return s.disj(std::vector<Prov>{s.conj(std::vector<Prov>{v("t3"), v("t9"), v("t10")}),
                                    s.conj(std::vector<Prov>{v("t3"), v("t9"), v("t11")}),
                                    s.conj(std::vector<Prov>{v("t3"), v("t10"), v("t11")})});
}

struct ParamExample
{
    Database db = load_fixture("school");
    ProvStore store;
    MinOnesProblem problem;

    explicit ParamExample(std::optional<std::int64_t> fixed)
    {
        auto q1 = type_check(load_query("school", "param_q1.ra"), db);
        auto q2 = type_check(load_query("school", "param_q2.ra"), db);
        ParamAssignment pin;
        if (fixed) pin["num_CS"] = *fixed;
        auto cs = difference_constraints(eval_agg_prov(db, q1, store, pin), eval_agg_prov(db, q2, store, pin));
        auto mary = std::find_if(cs.begin(), cs.end(), [](const GroupConstraint &g) { return g.label == "(Mary, AVG)"; });
        problem.agg_formula = mary->formula;
        if (not fixed) problem.int_params.push_back({"num_CS", -default_param_bound, default_param_bound, 3});
        auto vars = variables(*problem.agg_formula);
        IdSet closure(vars.begin(), vars.end());
        problem.hard_bool = fk_implications_for(db, store, closure);
    }
};

}

TEST(Solver, JesseWitness)
{
    RunningExample ex;
    ProvStore s;
    MinOnesProblem p{{}, {example_41(s, ex.db)}, {}, {}};
    auto m = solve_min_ones(p);
    EXPECT_EQ(m.cost, 3u);
    EXPECT_EQ(m.chosen, ids(ex.db, {"t3", "t9", "t10"}));
}

TEST(Solver, SingleVariable)
{
    RunningExample ex;
    ProvStore s;
    auto m = solve_min_ones({{}, {s.var(tid(ex.db, "t1"))}, {}, {}});
    EXPECT_EQ(m.chosen, ids(ex.db, {"t1"}));
}

TEST(Solver, WithForeignKeys)
{
    RunningExample ex;
    ProvStore s;
    auto mary = prov_of_tuple(ex.db, ex.q2, ex.q1, {"Mary", "CS"}, s);
    auto vars = variables(mary);
    IdSet closure(vars.begin(), vars.end());
    MinOnesProblem p{{}, {mary}, {}, {}};
    for (auto e : fk_implications_for(ex.db, s, closure)) p.hard_bool.push_back(e);
    auto m = solve_min_ones(p);
    EXPECT_EQ(m.chosen, ids(ex.db, {"t1", "t4", "t5"}));
    // A registration alone is never a model once its student is required.
    MinOnesProblem reg{{}, {s.var(tid(ex.db, "t4"))}, {}, {}};
    IdSet only{tid(ex.db, "t4")};
    reg.hard_bool.push_back(fk_implications_for(ex.db, s, only).front());
    EXPECT_EQ(solve_min_ones(reg).chosen, ids(ex.db, {"t1", "t4"}));
}

TEST(Solver, UnsatAndTrivial)
{
    ProvStore s;
    EXPECT_THROW(solve_min_ones({{}, {s.constant(false)}, {}, {}}), Unsat);
    auto m = solve_min_ones({make_vars(3), {}, {}, {}});
    EXPECT_EQ(m.cost, 0u);
    EXPECT_TRUE(m.chosen.empty());
}

TEST(Solver, OptimalOnRandomProblems)
{
    std::mt19937 rng(7);
    for (int round = 0; round < 400; ++round) {
        ProvStore s;
        auto vars = make_vars(std::uniform_int_distribution<std::size_t>(1, 12)(rng));
        MinOnesProblem p;
        int k = std::uniform_int_distribution<int>(1, 3)(rng);
        for (int i = 0; i < k; ++i) p.hard_bool.push_back(random_prov(s, vars, rng, 4));
        auto expected = brute_minimum(p);
        if (not expected) {
            EXPECT_THROW(solve_min_ones(p), Unsat);
            continue;
        }
        auto m = solve_min_ones(p);
        ASSERT_EQ(m.chosen, *expected) << "round " << round;
        EXPECT_EQ(m.cost, m.chosen.size());
        EXPECT_TRUE(satisfies(p, m.chosen));
    }
}

TEST(Solver, Timeout)
{
    // Twenty disjoint two-way choices: finding a model is easy, proving optimality is not for a plain search.
    ProvStore s;
    auto vars = make_vars(40);
    MinOnesProblem p;
    for (std::size_t i = 0; i < 40; i += 2) p.hard_bool.push_back(s.disj(s.var(vars[i]), s.var(vars[i + 1])));
    EXPECT_THROW(solve_min_ones(p, {0.01}), Timeout);
}

TEST(Enumerate, JesseWithinBudget)
{
    RunningExample ex;
    ProvStore s;
    auto models = enumerate_models({{}, {example_41(s, ex.db)}, {}, {}}, 128);
    EXPECT_EQ(models.size(), 4u);
    EXPECT_TRUE(std::any_of(models.begin(), models.end(), [](const Model &m) { return m.cost == 3; }));
}

TEST(Enumerate, ExhaustiveAndDistinct)
{
    std::mt19937 rng(11);
    for (int round = 0; round < 200; ++round) {
        ProvStore s;
        auto vars = make_vars(4);
        MinOnesProblem p{vars, {random_prov(s, vars, rng, 3)}, {}, {}};
        std::size_t count = 0;
        for (unsigned mask = 0; mask < 16; ++mask) {
            IdSet set;
            for (std::size_t i = 0; i < 4; ++i)
                if (mask & (1u << i)) set.insert(vars[i]);
            count += satisfies(p, set);
        }
        auto models = enumerate_models(p, 128);
        ASSERT_EQ(models.size(), count);
        std::set<IdSet> distinct;
        for (const auto &m : models) {
            EXPECT_TRUE(satisfies(p, m.chosen));
            distinct.insert(m.chosen);
        }
        EXPECT_EQ(distinct.size(), models.size());
        if (count > 2) EXPECT_EQ(enumerate_models(p, 2).size(), 2u);
    }
    EXPECT_TRUE(enumerate_models({{}, {ProvStore().constant(false)}, {}, {}}, 128).empty());
}

TEST(Enumerate, FiveModelsOfFourVariables)
{
    ProvStore s;
    auto v = make_vars(4);
    auto x = [&](int i) { return s.var(v[i]); };
    // a b + c d !a: ab with any c, d (4 models) plus !a c d with b free (2) minus overlap: 4 + 2 = 6; add !b to the
    // second term to leave exactly one, giving five.
    auto e = s.disj(s.conj(x(0), x(1)), s.conj(std::vector<Prov>{x(2), x(3), s.negate(x(0)), s.negate(x(1))}));
    auto models = enumerate_models({v, {e}, {}, {}}, 128);
    EXPECT_EQ(models.size(), 5u);
}

TEST(Params, ExampleParameterizedIsTwoTuples)
{
    ParamExample ex(std::nullopt);
    auto m = solve_with_params(ex.problem);
    EXPECT_EQ(m.chosen, ids(ex.db, {"t1", "t6"}));
    EXPECT_EQ(m.params.at("num_CS"), 1);
}

TEST(Params, FixedThresholdNeedsFourTuples)
{
    ParamExample ex(3);
    auto m = solve_with_params(ex.problem);
    EXPECT_EQ(m.chosen, ids(ex.db, {"t1", "t4", "t5", "t6"}));
    EXPECT_TRUE(m.params.empty());
}

TEST(Params, NoParametersDegeneratesToBoolean)
{
    RunningExample ex;
    ProvStore s;
    AggAtom always;
    always.lhs.kind = AggOperand::Kind::Expr;
    always.lhs.expr = {AggFunc::Count, {{s.var(tid(ex.db, "t4")), 1}}};
    always.op = CmpOp::Ge;
    always.rhs.constant = 0;
    MinOnesProblem p{{}, {example_41(s, ex.db)}, AggFormula::of(always), {}};
    EXPECT_EQ(solve_with_params(p).chosen, solve_min_ones({{}, {example_41(s, ex.db)}, {}, {}}).chosen);
}

TEST(Params, CompleteOnRandomAtoms)
{
    // Random Boolean skeletons over COUNT/SUM/MAX/AVG atoms with one or two parameters, checked against a search
    // over all assignments and every parameter value in a window containing all breakpoints.
    std::mt19937 rng(5);
    const AggFunc funcs[] = {AggFunc::Count, AggFunc::Sum, AggFunc::Max, AggFunc::Avg, AggFunc::Min};
    const CmpOp ops[] = {CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge};
    for (int round = 0; round < 150; ++round) {
        ProvStore s;
        auto vars = make_vars(std::uniform_int_distribution<std::size_t>(2, 6)(rng));
        int nparams = std::uniform_int_distribution<int>(1, 2)(rng);
        std::vector<AggFormula> atoms;
        for (int a = 0; a < 3; ++a) {
            AggAtom atom;
            atom.lhs.kind = AggOperand::Kind::Expr;
            atom.lhs.expr.func = funcs[std::uniform_int_distribution<int>(0, 4)(rng)];
            for (auto v : vars)
                if (rng() % 2) atom.lhs.expr.terms.push_back({s.var(v), Rational(int(rng() % 7) - 2, 1 + int(rng() % 2))});
            atom.op = ops[rng() % 6];
            atom.rhs.kind = AggOperand::Kind::Parameter;
            atom.rhs.param = rng() % nparams ? "p" : "q";
            if (rng() % 2) std::swap(atom.lhs, atom.rhs), atom.op = mirror(atom.op);
            atoms.push_back(AggFormula::of(atom));
        }
        AggFormula f = rng() % 2 ? AggFormula::conj({atoms[0], AggFormula::disj({atoms[1], AggFormula::negate(atoms[2])})})
                                 : AggFormula::disj({AggFormula::conj({atoms[0], atoms[1]}), atoms[2]});
        MinOnesProblem p;
        p.boolean_vars = vars;
        p.hard_bool.push_back(random_prov(s, vars, rng, 2));
        p.agg_formula = f;
        p.int_params = {{"p", -20, 20, 3}, {"q", -20, 20, -1}};

        std::optional<std::size_t> best;
        for (unsigned mask = 0; mask < (1u << vars.size()); ++mask) {
            IdSet set;
            for (std::size_t i = 0; i < vars.size(); ++i)
                if (mask & (1u << i)) set.insert(vars[i]);
            bool ok = false;
            for (std::int64_t a = -20; a <= 20 and not ok; ++a)
                for (std::int64_t b = -20; b <= 20 and not ok; ++b) ok = satisfies(p, set, {{"p", a}, {"q", b}});
            if (ok and (not best or set.size() < *best)) best = set.size();
        }
        if (not best) {
            EXPECT_THROW(solve_with_params(p), Unsat) << "round " << round;
            continue;
        }
        auto m = solve_with_params(p);
        ASSERT_EQ(m.cost, *best) << "round " << round;
        EXPECT_TRUE(satisfies(p, m.chosen, m.params)) << "round " << round;
    }
}

TEST(Smt, ListingShape)
{
    RunningExample ex;
    ProvStore s;
    auto mary = prov_of_tuple(ex.db, ex.q2, ex.q1, {"Mary", "CS"}, s);
    auto all = ex.db.ids();
    MinOnesProblem p{all, {mary}, {}, {}};
    auto name = [&](TupleId id) { return ex.db.alias(id); };
    auto text = emit_smtlib(p, name);
    std::vector<std::string> lines;
    for (std::size_t at = 0, next; at < text.size(); at = next + 1) {
        next = text.find('\n', at);
        lines.push_back(text.substr(at, next - at));
    }
    ASSERT_EQ(lines.size(), 11u + 3u);
    EXPECT_EQ(lines[0], "(declare-const t1 Bool)");
    EXPECT_EQ(lines[10], "(declare-const t11 Bool)");
    EXPECT_EQ(lines[11], "(define-fun b2i ((x Bool)) Int (ite x 1 0))");
    EXPECT_EQ(lines[12].rfind("(assert ", 0), 0u);
    std::string sum = "(minimize (+";
    for (int i = 1; i <= 11; ++i) sum += " (b2i t" + std::to_string(i) + ")";
    EXPECT_EQ(lines[13], sum + "))");
    EXPECT_EQ(emit_smtlib(p, name), text);
}

TEST(Smt, ParameterDeclaration)
{
    ParamExample ex(std::nullopt);
    auto text = emit_smtlib(ex.problem, [&](TupleId id) { return ex.db.alias(id); });
    auto decl = text.find("(declare-const num_CS Int)\n");
    ASSERT_NE(decl, std::string::npos);
    EXPECT_EQ(text.find("(define-fun b2i ((x Bool)) Int (ite x 1 0))"), decl + 27);
    EXPECT_EQ(text.find("(declare-const t11"), std::string::npos);
}

TEST(Smt, EmptyProblem)
{
    EXPECT_EQ(emit_smtlib({}, [](TupleId) { return std::string("x"); }),
              "(define-fun b2i ((x Bool)) Int (ite x 1 0))\n(minimize 0)\n");
}

TEST(ExternalSolver, ParsesModelFromCommand)
{
    RunningExample ex;
    ProvStore s;
    MinOnesProblem p{{}, {example_41(s, ex.db)}, {}, {}};
    auto dir = std::filesystem::temp_directory_path() / "cex-fake-solver";
    std::filesystem::create_directories(dir);
    auto script = dir / "solver.sh";
    {
        std::ofstream f(script);
        f << "#!/bin/sh\ngrep -q 'minimize' \"$1\" || exit 1\n"
             "echo sat\necho '(objectives (12 3))'\n"
             "echo '(model (define-fun t3 () Bool true) (define-fun t9 () Bool true)'\n"
             "echo '  (define-fun t10 () Bool false) (define-fun t11 () Bool true))'\n";
    }
    std::filesystem::permissions(script, std::filesystem::perms::owner_all);
    auto name = [&](TupleId id) { return ex.db.alias(id); };
    auto m = ExternalSolver(script.string()).solve(p, name);
    EXPECT_EQ(m.chosen, ids(ex.db, {"t3", "t9", "t11"}));

    auto unsat = dir / "unsat.sh";
    {
        std::ofstream f(unsat);
        f << "#!/bin/sh\necho unsat\n";
    }
    std::filesystem::permissions(unsat, std::filesystem::perms::owner_all);
    EXPECT_THROW(ExternalSolver(unsat.string()).solve(p, name), Unsat);
    EXPECT_THROW(ExternalSolver((dir / "missing").string()).solve(p, name), SolverBackendError);
    std::filesystem::remove_all(dir);
}
