#include "cex/agg_prov.hpp"
#include "cex/error.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace cex;
using namespace cex::testing;

namespace {

IdSet subset(const std::vector<TupleId> &all, unsigned mask)
{
    IdSet s;
    for (std::size_t i = 0; i < all.size(); ++i)
        if (mask & (1u << i)) s.insert(all[i]);
    return s;
}

/// Concrete result obtained by evaluating the symbolic rows on a subinstance.
std::vector<Tuple> instantiate(const AnnotatedAggRelation &r, const IdSet &s, const ParamAssignment &params)
{
    auto present = [&](TupleId id) { return s.contains(id); };
    std::vector<Tuple> out;
    for (const auto &row : r.rows) {
        if (not evaluate(row.exists, present, params)) continue;
        Tuple t;
        for (const auto &c : row.cells) {
            if (not c.symbolic) {
                t.push_back(c.value);
                continue;
            }
            auto v = evaluate(c.expr, present);
            EXPECT_TRUE(v.has_value());
            t.push_back(v ? Value(v->num / v->den) : Value());
        }
        out.push_back(std::move(t));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<TupleId> vars_of(const Prov &p) { return variables(p); }

}

TEST(AggProv, TableTwoGroupMary)
{
    auto db = load_fixture("school");
    auto q2 = type_check(load_query("school", "having_q2.ra"), db);
    ProvStore s;
    auto r = eval_agg_prov(db, q2, s);
    ASSERT_EQ(r.rows.size(), 3u);
    const auto &mary = r.rows[2];
    ASSERT_EQ(mary.key, Tuple{"Mary"});

    // Existence: t1 (t4 + t5 + t6) conjoined with a COUNT >= 3 atom.
    ASSERT_EQ(mary.exists.kind, AggFormula::Kind::And);
    ASSERT_EQ(mary.exists.children.size(), 2u);
    const auto &prov = mary.exists.children[0];
    ASSERT_EQ(prov.kind, AggFormula::Kind::Prov);
    Prov t1 = s.var(tid(db, "t1"));
    Prov expected = s.conj(t1, s.disj(std::vector<Prov>{s.var(tid(db, "t4")), s.var(tid(db, "t5")), s.var(tid(db, "t6"))}));
    EXPECT_EQ(to_dnf(prov.prov), to_dnf(expected));
    const auto &atom = mary.exists.children[1];
    ASSERT_EQ(atom.kind, AggFormula::Kind::Atom);
    EXPECT_EQ(atom.atom.op, CmpOp::Ge);
    EXPECT_EQ(atom.atom.lhs.expr.func, AggFunc::Count);
    EXPECT_EQ(atom.atom.rhs.constant, Rational(3));
    ASSERT_EQ(atom.atom.lhs.expr.terms.size(), 3u);
    for (const auto &t : atom.atom.lhs.expr.terms) EXPECT_EQ(t.value, Rational(1));

    // avg_grade: t4⊗100, t5⊗75, t6⊗95, each guarded by the joined row's provenance.
    ASSERT_TRUE(mary.cells[1].symbolic);
    const auto &avg = mary.cells[1].expr;
    EXPECT_EQ(avg.func, AggFunc::Avg);
    ASSERT_EQ(avg.terms.size(), 3u);
    const char *regs[] = {"t4", "t5", "t6"};
    const int grades[] = {100, 75, 95};
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(avg.terms[i].value, Rational(grades[i]));
        EXPECT_EQ(vars_of(avg.terms[i].guard), (std::vector<TupleId>{tid(db, "t1"), tid(db, regs[i])}));
    }
    auto name = [&](TupleId id) { return db.alias(id); };
    EXPECT_EQ(render(avg, name), "(t1 t4)⊗100 +AVG (t1 t5)⊗75 +AVG (t1 t6)⊗95");
}

TEST(AggProv, TableTwoGroupJohn)
{
    auto db = load_fixture("school");
    auto q1 = type_check(load_query("school", "having_q1.ra"), db);
    ProvStore s;
    auto r = eval_agg_prov(db, q1, s);
    auto john = std::find_if(r.rows.begin(), r.rows.end(), [](const AggRow &row) { return row.key == Tuple{"John"}; });
    ASSERT_NE(john, r.rows.end());
    // t2 t7 with the atom t7⊗1 >= 3: false whatever the subinstance.
    auto name = [&](TupleId id) { return db.alias(id); };
    EXPECT_EQ(render(john->exists, name), "((t2 t7) and [(t2 t7)⊗1 >= 3])");
    for (unsigned mask = 0; mask < 8; ++mask) {
        auto sub = subset({tid(db, "t2"), tid(db, "t7"), tid(db, "t8")}, mask);
        EXPECT_FALSE(evaluate(john->exists, [&](TupleId id) { return sub.contains(id); }, {}));
    }
}

TEST(AggProv, SingleTupleCount)
{
    auto db = load_fixture("school");
    auto q = type_check(parse_query("groupby[name; COUNT(*) as n](Student)"), db);
    ProvStore s;
    auto r = eval_agg_prov(db, q, s);
    ASSERT_EQ(r.rows.size(), 3u);
    for (const auto &row : r.rows) {
        const auto &terms = row.cells[1].expr.terms;
        ASSERT_EQ(terms.size(), 1u);
        EXPECT_EQ(terms[0].guard.kind(), ProvKind::Var);
        EXPECT_EQ(terms[0].value, Rational(1));
    }
}

TEST(AggProv, SoundOnEverySubinstance)
{
    // Symbolic evaluation, instantiated on a subinstance, equals plain evaluation of that subinstance.
    auto db = load_fixture("school");
    auto all = db.ids();
    ASSERT_EQ(all.size(), 11u);
    std::vector<std::pair<TypedQuery, ParamAssignment>> cases;
    for (const char *f : {"avg_q1.ra", "avg_q2.ra", "having_q1.ra", "having_q2.ra"})
        cases.emplace_back(type_check(load_query("school", f), db), ParamAssignment{});
    for (std::int64_t n : {0, 1, 2, 3}) {
        cases.emplace_back(type_check(load_query("school", "param_q1.ra"), db), ParamAssignment{{"num_CS", n}});
        cases.emplace_back(type_check(load_query("school", "param_q2.ra"), db), ParamAssignment{{"num_CS", n}});
    }
    cases.emplace_back(type_check(parse_query("project[m](groupby[dept; MIN(grade) as lo, MAX(grade) as m, SUM(grade) "
                                              "as s](Registration))"),
                                  db),
                       ParamAssignment{});
    cases.emplace_back(type_check(parse_query("select[s > 180 or lo = 75](groupby[dept; MIN(grade) as lo, SUM(grade) "
                                              "as s](Registration minus select[grade < 80](Registration)))"),
                                  db),
                       ParamAssignment{});
    for (const auto &[q, params] : cases) {
        ProvStore s;
        auto symbolic = eval_agg_prov(db, q, s);
        for (unsigned mask = 0; mask < (1u << all.size()); ++mask) {
            auto sub = subset(all, mask);
            auto expected = eval_plain(restrict(db, sub), q, params).rows;
            ASSERT_EQ(instantiate(symbolic, sub, params), expected) << render(q.ast) << " mask " << mask;
        }
    }
}

TEST(AggProv, FixedParametersAreSubstituted)
{
    auto db = load_fixture("school");
    auto q = type_check(load_query("school", "param_q2.ra"), db);
    ProvStore s;
    auto symbolic = eval_agg_prov(db, q, s);
    EXPECT_EQ(parameters(symbolic.rows[0].exists), std::set<std::string>{"num_CS"});
    auto fixed = eval_agg_prov(db, q, s, {{"num_CS", 3}});
    EXPECT_TRUE(parameters(fixed.rows[0].exists).empty());
}

TEST(AggProv, Restrictions)
{
    auto db = load_fixture("school");
    ProvStore s;
    auto joined = type_check(parse_query("groupby[name; COUNT(*) as n](Registration) join Student"), db);
    EXPECT_THROW(eval_agg_prov(db, joined, s), AggRestrictionViolated);
    auto nested = type_check(parse_query("groupby[; COUNT(*) as k](groupby[name; COUNT(*) as n](Registration))"), db);
    EXPECT_THROW(eval_agg_prov(db, nested, s), AggRestrictionViolated);
}

TEST(AggConstraints, MaryGroupSkeleton)
{
    auto db = load_fixture("school");
    auto q1 = type_check(load_query("school", "having_q1.ra"), db);
    auto q2 = type_check(load_query("school", "having_q2.ra"), db);
    ProvStore s;
    auto r1 = eval_agg_prov(db, q1, s);
    auto r2 = eval_agg_prov(db, q2, s);
    auto cs = difference_constraints(r1, r2);
    auto mary = std::find_if(cs.begin(), cs.end(), [](const GroupConstraint &g) { return g.label == "(Mary, AVG)"; });
    ASSERT_NE(mary, cs.end());
    EXPECT_TRUE(mary->aligned);
    // (E1 ⊕ E2) ∨ (E1 ∧ E2 ∧ ¬(val1 = val2))
    const auto &f = mary->formula;
    ASSERT_EQ(f.kind, AggFormula::Kind::Or);
    ASSERT_EQ(f.children.size(), 2u);
    EXPECT_EQ(f.children[0].kind, AggFormula::Kind::Xor);
    const auto &both = f.children[1];
    ASSERT_EQ(both.kind, AggFormula::Kind::And);
    ASSERT_EQ(both.children.back().kind, AggFormula::Kind::Not);
    const auto &eq = both.children.back().children[0];
    ASSERT_EQ(eq.kind, AggFormula::Kind::Atom);
    EXPECT_EQ(eq.atom.op, CmpOp::Eq);
    EXPECT_EQ(eq.atom.lhs.expr.terms.size(), 2u);
    EXPECT_EQ(eq.atom.rhs.expr.terms.size(), 3u);
}

TEST(AggConstraints, ExactOnEverySubinstance)
{
    // Some constraint holds on a subinstance exactly when the two queries differ there.
    auto db = load_fixture("school");
    auto all = db.ids();
    std::vector<std::pair<const char *, const char *>> pairs{
        {"groupby[name; AVG(grade) as a](select[dept='CS'](Student join Registration))",
         "groupby[name; AVG(grade) as a](Student join Registration)"},
        {"project[a](groupby[name; AVG(grade) as a](select[dept='CS'](Registration)))",
         "project[a](groupby[name; AVG(grade) as a](Registration))"},
        {"project[name](select[c >= 2](groupby[name; COUNT(*) as c](Registration)))",
         "project[name](select[s > 170](groupby[name; SUM(grade) as s](Registration)))"},
        {"groupby[dept; MAX(grade) as g](Registration)", "groupby[dept; MIN(grade) as g](Registration)"},
    };
    for (const auto &[a, b] : pairs) {
        auto q1 = type_check(parse_query(a), db);
        auto q2 = type_check(parse_query(b), db);
        ProvStore s;
        auto cs = difference_constraints(eval_agg_prov(db, q1, s), eval_agg_prov(db, q2, s));
        for (unsigned mask = 0; mask < (1u << all.size()); ++mask) {
            auto sub = subset(all, mask);
            auto present = [&](TupleId id) { return sub.contains(id); };
            bool differ = eval_plain(restrict(db, sub), q1) != eval_plain(restrict(db, sub), q2);
            bool some = std::any_of(cs.begin(), cs.end(),
                                    [&](const GroupConstraint &g) { return evaluate(g.formula, present, {}); });
            ASSERT_EQ(some, differ) << a << " vs " << b << " mask " << mask;
        }
    }
}

TEST(AggConstraints, SmtRendering)
{
    auto db = load_fixture("school");
    auto q1 = type_check(load_query("school", "param_q1.ra"), db);
    auto q2 = type_check(load_query("school", "param_q2.ra"), db);
    ProvStore s;
    auto cs = difference_constraints(eval_agg_prov(db, q1, s), eval_agg_prov(db, q2, s));
    auto mary = std::find_if(cs.begin(), cs.end(), [](const GroupConstraint &g) { return g.label == "(Mary, AVG)"; });
    ASSERT_NE(mary, cs.end());
    auto name = [&](TupleId id) { return db.alias(id); };
    auto text = render_smt(mary->formula, name);
    EXPECT_NE(text.find("(distinct (and (or (and t1 t4) (and t1 t5)) (>= (+ (b2i (and t1 t4)) (b2i (and t1 t5))) "
                        "num_CS))"),
              std::string::npos)
        << text;
    // AVG equality is cross-multiplied under positive-count guards.
    EXPECT_NE(text.find("(> (+ (b2i (and t1 t4)) (b2i (and t1 t5))) 0)"), std::string::npos) << text;
    EXPECT_EQ(text.find("(/ "), std::string::npos);
}
