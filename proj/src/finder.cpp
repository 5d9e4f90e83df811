#include "cex/finder.hpp"

#include "cex/agg_prov.hpp"
#include "cex/error.hpp"
#include <algorithm>
#include <chrono>
#include <cmath>

namespace cex {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

/// Adds the wall time of its scope to one phase counter.
class Phase
{
    public:
    explicit Phase(double &slot) : slot_(slot), start_(Clock::now()) { }
    ~Phase() { slot_ += elapsed_ms(start_); }

    private:
    double &slot_;
    Clock::time_point start_;
};

class Budget
{
    public:
    explicit Budget(double seconds) : seconds_(seconds), start_(Clock::now()) { }

    SolveOptions solve_options() const { return {left()}; }

    /// Seconds remaining; throws Timeout once none are.
    double left() const
    {
        double rest = seconds_ - elapsed_ms(start_) / 1000.0;
        if (rest <= 0) throw Timeout(seconds_);
        return rest;
    }

    private:
    double seconds_;
    Clock::time_point start_;
};

bool has_agg(const TypedQuery &q) { return contains_kind(q.ast, NodeKind::GroupAgg); }

/// Smaller first, then lexicographically smaller.
bool better(const IdSet &a, const IdSet &b)
{
    return a.size() != b.size() ? a.size() < b.size() : a < b;
}

Model solve(const MinOnesProblem &p, const Database &db, const FinderOptions &options, const Budget &budget)
{
    if (options.external_solver)
        return ExternalSolver(*options.external_solver).solve(p, [&](TupleId id) { return db.alias(id); });
    return solve_with_params(p, budget.solve_options());
}

/// Conjoins the foreign-key implications of every problem variable and its ancestors.
void add_foreign_keys(const Database &db, ProvStore &store, MinOnesProblem &p)
{
    auto vars = problem_variables(p);
    IdSet closure(vars.begin(), vars.end());
    for (auto e : fk_implications_for(db, store, closure)) p.hard_bool.push_back(e);
}

std::int64_t preferred_value(const FinderOptions &options, const std::string &name)
{
    auto it = options.params.find(name);
    return it == options.params.end() ? std::int64_t(0) : it->second;
}

ParamAssignment merged(ParamAssignment base, const ParamAssignment &over)
{
    for (const auto &[k, v] : over) base[k] = v;
    return base;
}

/// The values of the parameters the queries mention.
std::optional<ParamAssignment> used_params(const TypedQuery &q1, const TypedQuery &q2, const ParamAssignment &all)
{
    if (q1.params.empty() and q2.params.empty()) return std::nullopt;
    ParamAssignment out;
    for (const auto &[k, v] : all)
        if (q1.params.count(k) or q2.params.count(k)) out[k] = v;
    return out;
}

Counterexample finish(const Database &db, const TypedQuery &q1, const TypedQuery &q2, Counterexample c,
                      const ParamAssignment &params, Timings &tm)
{
    Phase ph(tm.raw_eval);
    c.ids = fk_closure(db, c.ids);
    c.param_setting = used_params(q1, q2, params);
    c.verified = verify_counterexample(db, q1, q2, c.ids, params);
    if (c.verified and not c.witness_tuple) {
        auto sub = restrict(db, c.ids);
        auto diff = symmetric_diff(sub, q1, q2, params);
        c.witness_tuple = diff.left_only.rows.empty() ? diff.right_only.rows.front() : diff.left_only.rows.front();
    }
    return c;
}

void collect_params(const Predicate &p, std::set<std::string> &out)
{
    if (p.kind == Predicate::Kind::Compare) {
        if (p.lhs.kind == Operand::Kind::Parameter) out.insert(p.lhs.name);
        if (p.rhs.kind == Operand::Kind::Parameter) out.insert(p.rhs.name);
    }
    for (const auto &c : p.children) collect_params(c, out);
}

/// Parameter atoms "attribute op @param" in a predicate, normalized to put the parameter on the right.
struct ParamAtom
{
    std::string param;
    std::string attribute;
    CmpOp op;
};

void collect_atoms(const Predicate &p, std::vector<ParamAtom> &out)
{
    if (p.kind == Predicate::Kind::Compare) {
        if (p.rhs.kind == Operand::Kind::Parameter and p.lhs.kind == Operand::Kind::Attribute)
            out.push_back({p.rhs.name, p.lhs.name, p.op});
        else if (p.lhs.kind == Operand::Kind::Parameter and p.rhs.kind == Operand::Kind::Attribute)
            out.push_back({p.lhs.name, p.rhs.name, mirror(p.op)});
    }
    for (const auto &c : p.children) collect_atoms(c, out);
}

/// The GroupAgg of an aggregate query with only select, project and rename above it.
struct AggShape
{
    std::vector<const QueryAst *> above;
    const QueryAst *group = nullptr;
    const Plan *group_plan = nullptr;
};

std::optional<AggShape> agg_shape(const TypedQuery &q)
{
    AggShape s;
    const QueryAst *n = &q.ast;
    const Plan *p = &q.plan;
    while (n->kind == NodeKind::Select or n->kind == NodeKind::Project or n->kind == NodeKind::Rename) {
        s.above.push_back(n);
        n = &n->children[0];
        p = &p->children[0];
    }
    if (n->kind != NodeKind::GroupAgg or contains_kind(n->children[0], NodeKind::GroupAgg)) return std::nullopt;
    s.group = n;
    s.group_plan = p;
    return s;
}

Rational floor_of(const Rational &r)
{
    auto q = r.numerator() / r.denominator();
    if (r.numerator() % r.denominator() != 0 and r.numerator() < 0) --q;
    return q;
}

Rational ceil_of(const Rational &r) { return r.denominator() == 1 ? r : floor_of(r) + 1; }

/// Settings for the freed parameters, in the order they should be tried on candidate `ids`.
std::vector<ParamAssignment> heuristic_settings(const Database &db, const IdSet &ids,
                                                const std::vector<AggShape> &shapes, const std::set<std::string> &free,
                                                const ParamAssignment &fixed, const ParamAssignment &preferred)
{
    if (free.empty()) return {{}};
    auto sub = restrict(db, ids);
    std::map<std::string, std::vector<std::int64_t>> choices;
    std::map<std::string, std::vector<std::int64_t>> extra;
    auto push = [](std::vector<std::int64_t> &v, const Rational &r) {
        auto x = floor_of(r).numerator();
        x = std::clamp<std::int64_t>(x, -default_param_bound, default_param_bound);
        if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
    };
    for (const auto &s : shapes) {
        std::vector<ParamAtom> atoms;
        for (auto *n : s.above)
            if (n->kind == NodeKind::Select) collect_atoms(n->predicate, atoms);
        if (atoms.empty()) continue;
        auto groups = eval_plain(sub, *s.group_plan, fixed);
        for (const auto &a : atoms) {
            if (not free.count(a.param)) continue;
            std::vector<std::size_t> cols;
            for (std::size_t i = 0; i < s.group_plan->schema.size(); ++i)
                if (s.group_plan->schema[i].name == a.attribute) cols.push_back(i);
            if (cols.empty())
                for (std::size_t i = 0; i < s.group_plan->schema.size(); ++i)
                    if (s.group_plan->schema[i].aggregate) cols.push_back(i);
            std::vector<Rational> vs;
            for (const auto &row : groups.rows)
                for (auto c : cols)
                    if (row[c].is_number()) vs.push_back(row[c].number());
            if (vs.empty()) continue;
            auto [lo, hi] = std::minmax_element(vs.begin(), vs.end());
            auto &c = choices[a.param];
            switch (a.op) {
                case CmpOp::Ge: push(c, floor_of(*lo)); break;
                case CmpOp::Gt: push(c, ceil_of(*lo) - 1); break;
                case CmpOp::Le: push(c, ceil_of(*hi)); break;
                case CmpOp::Lt: push(c, floor_of(*hi) + 1); break;
                case CmpOp::Ne: push(c, floor_of(*hi) + 1); break;
                case CmpOp::Eq:
                    for (const auto &v : vs)
                        if (v.denominator() == 1) push(c, v);
                    break;
            }
            for (const auto &v : vs)
                for (int d : {-1, 0, 1, 2}) push(extra[a.param], floor_of(v) + d);
        }
    }
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> axes;
    for (const auto &p : free) {
        auto vals = choices[p];
        for (auto v : extra[p])
            if (std::find(vals.begin(), vals.end(), v) == vals.end()) vals.push_back(v);
        auto it = preferred.find(p);
        std::int64_t pref = it == preferred.end() ? 0 : it->second;
        if (std::find(vals.begin(), vals.end(), pref) == vals.end()) vals.push_back(pref);
        axes.emplace_back(p, std::move(vals));
    }
    std::vector<ParamAssignment> out{{}};
    for (const auto &[name, vals] : axes) {
        std::vector<ParamAssignment> next;
        for (const auto &partial : out)
            for (auto v : vals) {
                if (next.size() >= 4096) break;
                auto s = partial;
                s[name] = v;
                next.push_back(std::move(s));
            }
        out = std::move(next);
    }
    return out;
}

/// Aggregate-free plans below the differences (and renames over differences) of a query.
void monotone_leaves(const Plan &p, std::vector<const Plan *> &out)
{
    auto has_difference = [](const Plan &q, auto &self) -> bool {
        if (q.kind == NodeKind::Difference) return true;
        return std::any_of(q.children.begin(), q.children.end(), [&](const Plan &c) { return self(c, self); });
    };
    if (p.kind == NodeKind::Difference) {
        monotone_leaves(p.children[0], out);
        monotone_leaves(p.children[1], out);
    } else if (p.kind == NodeKind::Rename and has_difference(p, has_difference)) {
        monotone_leaves(p.children[0], out);
    } else {
        out.push_back(&p);
    }
}

AnnotatedAggRelation annotate(const Database &db, const TypedQuery &q, ProvStore &store, const ParamAssignment &fixed)
{
    if (has_agg(q)) return eval_agg_prov(db, q, store, fixed);
    auto rel = eval_prov_potential(db, q.plan, store, fixed);
    AnnotatedAggRelation out{q.schema, {}};
    for (const auto &r : rel.rows) {
        AggRow row;
        row.key = r.values;
        row.exists = AggFormula::of(r.prov);
        for (const auto &v : r.values) row.cells.push_back(SymCell{false, v, {}});
        out.rows.push_back(std::move(row));
    }
    return out;
}

/// The aggregation input Q′: group keys followed by the aggregated attributes.
QueryAst stripped(const AggShape &s)
{
    QueryAst p;
    p.kind = NodeKind::Project;
    p.attributes = s.group->attributes;
    for (const auto &a : s.group->aggregates)
        if (not a.attribute.empty() and
            std::find(p.attributes.begin(), p.attributes.end(), a.attribute) == p.attributes.end())
            p.attributes.push_back(a.attribute);
    p.children.push_back(s.group->children[0]);
    return p;
}

std::vector<TupleId> all_ids(const Database &db)
{
    auto ids = db.ids();
    std::sort(ids.begin(), ids.end());
    return ids;
}

void collect_groups(const Plan &p, std::vector<const Plan *> &out)
{
    if (p.kind == NodeKind::GroupAgg) out.push_back(&p);
    for (const auto &c : p.children) collect_groups(c, out);
}

/// Parameter grid for the brute-force oracle: the preferred value plus every integer next to an aggregate value.
std::vector<ParamAssignment> oracle_grid(const Database &sub, const TypedQuery &q1, const TypedQuery &q2,
                                         const std::set<std::string> &free, const ParamAssignment &fixed,
                                         const ParamAssignment &preferred)
{
    if (free.empty()) return {{}};
    std::vector<const Plan *> groups;
    collect_groups(q1.plan, groups);
    collect_groups(q2.plan, groups);
    std::set<std::int64_t> near;
    for (auto *g : groups) {
        auto rel = eval_plain(sub, *g, fixed);
        for (const auto &row : rel.rows)
            for (std::size_t i = 0; i < g->schema.size(); ++i)
                if (g->schema[i].aggregate and row[i].is_number()) {
                    auto f = floor_of(row[i].number()).numerator();
                    for (std::int64_t d : {-1, 0, 1, 2}) near.insert(f + d);
                }
    }
    std::vector<ParamAssignment> out{{}};
    for (const auto &name : free) {
        auto it = preferred.find(name);
        std::int64_t pref = it == preferred.end() ? 0 : it->second;
        std::vector<std::int64_t> vals(near.begin(), near.end());
        vals.push_back(pref);
        for (auto &v : vals) v = std::clamp<std::int64_t>(v, -default_param_bound, default_param_bound);
        std::sort(vals.begin(), vals.end(), [&](std::int64_t a, std::int64_t b) {
            auto da = a > pref ? a - pref : pref - a, db = b > pref ? b - pref : pref - b;
            return da != db ? da < db : a < b;
        });
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        std::vector<ParamAssignment> next;
        for (const auto &partial : out)
            for (auto v : vals) {
                auto s = partial;
                s[name] = v;
                next.push_back(std::move(s));
            }
        out = std::move(next);
    }
    return out;
}

}

std::string_view to_string(Strategy s)
{
    switch (s) {
        case Strategy::Auto: return "auto";
        case Strategy::Basic: return "basic";
        case Strategy::OptSigma: return "opt_sigma";
        case Strategy::AggBasic: return "agg_basic";
        case Strategy::AggParam: return "agg_param";
        case Strategy::AggHeuristic: return "agg_heuristic";
        case Strategy::Fastpath: return "fastpath";
        case Strategy::BruteForce: return "brute_force";
    }
    return "?";
}

std::optional<Strategy> parse_strategy(std::string_view name)
{
    for (auto s : {Strategy::Auto, Strategy::Basic, Strategy::OptSigma, Strategy::AggBasic, Strategy::AggParam,
                   Strategy::AggHeuristic, Strategy::Fastpath, Strategy::BruteForce})
        if (to_string(s) == name) return s;
    return std::nullopt;
}

bool verify_counterexample(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const IdSet &ids,
                           const ParamAssignment &params)
{
    auto sub = restrict(db, ids);
    if (not check_constraints(sub).ok()) return false;
    return eval_plain(sub, q1, params) != eval_plain(sub, q2, params);
}

std::set<std::string> having_params(const QueryAst &q)
{
    std::set<std::string> out;
    const QueryAst *n = &q;
    while (n->kind == NodeKind::Select or n->kind == NodeKind::Project or n->kind == NodeKind::Rename) {
        if (n->kind == NodeKind::Select) collect_params(n->predicate, out);
        n = &n->children[0];
    }
    if (n->kind != NodeKind::GroupAgg) return {};
    return out;
}

Counterexample basic(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const FinderOptions &options,
                     Timings *timings)
{
    Timings local;
    Timings &tm = timings ? *timings : local;
    if (has_agg(q1) or has_agg(q2)) throw NotEligible("basic handles aggregate-free queries only");
    Budget budget(options.timeout_seconds);
    {
        Phase ph(tm.raw_eval);
        symmetric_diff(db, q1, q2, options.params);
    }
    ProvStore store;
    std::optional<Counterexample> best;
    for (int dir = 0; dir < 2; ++dir) {
        const auto &a = dir ? q2 : q1;
        const auto &b = dir ? q1 : q2;
        AnnotatedRelation rel;
        {
            Phase ph(tm.prov_eval);
            rel = eval_prov_potential(db, difference_plan(a.plan, b.plan), store, options.params);
        }
        for (const auto &row : rel.rows) {
            if (row.prov.is_false()) continue;
            MinOnesProblem p;
            p.hard_bool.push_back(row.prov);
            add_foreign_keys(db, store, p);
            std::optional<IdSet> found;
            {
                Phase ph(tm.solve);
                try {
                    if (options.legacy_enumerate) {
                        for (auto &m : enumerate_models(p, options.max_trials, budget.solve_options()))
                            if (not found or better(m.chosen, *found)) found = m.chosen;
                    } else {
                        found = solve(p, db, options, budget).chosen;
                    }
                } catch (const Unsat &) {
                }
            }
            if (found and (not best or better(*found, best->ids))) {
                best = Counterexample{};
                best->ids = *found;
                best->witness_tuple = row.values;
            }
        }
    }
    if (not best) throw NoModelFound("no tuple of either difference has a satisfiable provenance");
    best->strategy = options.legacy_enumerate ? "basic(enumerate)" : "basic";
    return finish(db, q1, q2, std::move(*best), options.params, tm);
}

namespace {

struct SigmaProblem
{
    Tuple tuple;
    MinOnesProblem problem;
};

/// The first differing tuple (Q1 − Q2 before Q2 − Q1) and the constraints of its witnesses.
SigmaProblem sigma_problem(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const FinderOptions &options,
                           ProvStore &store, Timings &tm)
{
    SymmetricDifference diff;
    {
        Phase ph(tm.raw_eval);
        diff = symmetric_diff(db, q1, q2, options.params);
    }
    bool left = not diff.left_only.rows.empty();
    SigmaProblem out;
    out.tuple = left ? diff.left_only.rows.front() : diff.right_only.rows.front();
    Phase ph(tm.prov_eval);
    out.problem.hard_bool.push_back(left ? prov_of_tuple(db, q1, q2, out.tuple, store, options.params)
                                         : prov_of_tuple(db, q2, q1, out.tuple, store, options.params));
    add_foreign_keys(db, store, out.problem);
    return out;
}

struct AggProblems
{
    std::vector<MinOnesProblem> problems;  ///< one per group constraint
    std::set<std::string> free;
    ParamAssignment fixed;
};

AggProblems agg_problems(const Database &db, const TypedQuery &q1, const TypedQuery &q2, bool parameterize,
                         const FinderOptions &options, ProvStore &store, Timings &tm)
{
    AggProblems out;
    if (parameterize) {
        out.free = having_params(q1.ast);
        out.free.merge(having_params(q2.ast));
    }
    for (const auto &[k, v] : options.params)
        if (not out.free.count(k)) out.fixed[k] = v;
    if (not parameterize) {
        Phase ph(tm.raw_eval);
        symmetric_diff(db, q1, q2, options.params);
    }
    Phase ph(tm.prov_eval);
    auto constraints = difference_constraints(annotate(db, q1, store, out.fixed), annotate(db, q2, store, out.fixed));
    for (const auto &c : constraints) {
        MinOnesProblem p;
        p.agg_formula = c.formula;
        for (const auto &name : parameters(c.formula))
            p.int_params.push_back({name, -default_param_bound, default_param_bound, preferred_value(options, name)});
        add_foreign_keys(db, store, p);
        out.problems.push_back(std::move(p));
    }
    return out;
}

}

Counterexample opt_sigma(const Database &db, const TypedQuery &q1, const TypedQuery &q2,
                         const FinderOptions &options, Timings *timings)
{
    Timings local;
    Timings &tm = timings ? *timings : local;
    if (has_agg(q1) or has_agg(q2)) throw NotEligible("opt_sigma handles aggregate-free queries only");
    Budget budget(options.timeout_seconds);
    ProvStore store;
    auto sp = sigma_problem(db, q1, q2, options, store, tm);
    Counterexample c;
    {
        Phase ph(tm.solve);
        c.ids = solve(sp.problem, db, options, budget).chosen;
    }
    c.witness_tuple = sp.tuple;
    c.strategy = "opt_sigma";
    return finish(db, q1, q2, std::move(c), options.params, tm);
}

Counterexample agg_basic(const Database &db, const TypedQuery &q1, const TypedQuery &q2, bool parameterize,
                         const FinderOptions &options, Timings *timings)
{
    Timings local;
    Timings &tm = timings ? *timings : local;
    if (not has_agg(q1) and not has_agg(q2)) throw NotEligible("neither query aggregates");
    Budget budget(options.timeout_seconds);
    ProvStore store;
    auto ap = agg_problems(db, q1, q2, parameterize, options, store, tm);
    std::optional<Counterexample> best;
    ParamAssignment best_params;
    for (const auto &p : ap.problems) {
        Model m;
        {
            Phase ph(tm.solve);
            try {
                m = solve(p, db, options, budget);
            } catch (const Unsat &) {
                continue;
            }
        }
        if (best and not better(m.chosen, best->ids)) continue;
        best = Counterexample{};
        best->ids = m.chosen;
        best_params = merged(ap.fixed, m.params);
        for (const auto &name : ap.free)
            if (not best_params.count(name)) best_params[name] = preferred_value(options, name);
    }
    if (not best) {
        if (parameterize) throw QueriesAgree();
        throw NoModelFound("no group constraint is satisfiable");
    }
    best->strategy = parameterize ? "agg_param" : "agg_basic";
    return finish(db, q1, q2, std::move(*best), best_params, tm);
}

MinOnesProblem witness_problem(const Database &db, const TypedQuery &q1, const TypedQuery &q2, ProvStore &store,
                               const FinderOptions &options)
{
    Timings tm;
    MinOnesProblem out;
    if (not has_agg(q1) and not has_agg(q2)) {
        out = sigma_problem(db, q1, q2, options, store, tm).problem;
    } else {
        Budget budget(options.timeout_seconds);
        auto ap = agg_problems(db, q1, q2, options.parameterize, options, store, tm);
        std::optional<IdSet> best;
        for (auto &p : ap.problems) {
            try {
                auto m = solve_with_params(p, budget.solve_options());
                if (best and not better(m.chosen, *best)) continue;
                best = m.chosen;
                out = std::move(p);
            } catch (const Unsat &) {
            }
        }
        if (not best) throw NoModelFound("no group constraint is satisfiable");
    }
    out.boolean_vars = all_ids(db);
    return out;
}

Counterexample agg_heuristic(const Database &db, const TypedQuery &q1, const TypedQuery &q2,
                             const FinderOptions &options, Timings *timings)
{
    Timings local;
    Timings &tm = timings ? *timings : local;
    auto s1 = agg_shape(q1), s2 = agg_shape(q2);
    if (not s1 or not s2)
        throw NotHeuristicEligible("both queries need a single aggregation under select, project and rename");
    const auto &aggs1 = s1->group->aggregates, &aggs2 = s2->group->aggregates;
    bool same = aggs1.size() == aggs2.size() and
                std::equal(aggs1.begin(), aggs1.end(), aggs2.begin(), [](const AggSpec &a, const AggSpec &b) {
                    return a.func == b.func and a.attribute == b.attribute;
                });
    if (not same) throw NotHeuristicEligible("the aggregate lists differ");
    std::pair<TypedQuery, TypedQuery> inner;
    try {
        inner = validate_pair(stripped(*s1), stripped(*s2), db);
    } catch (const Error &e) {
        throw NotHeuristicEligible(std::string("aggregation inputs are not comparable: ") + e.what());
    }

    Budget budget(options.timeout_seconds);
    std::set<std::string> free = having_params(q1.ast);
    free.merge(having_params(q2.ast));
    ParamAssignment fixed;
    for (const auto &[k, v] : options.params)
        if (not free.count(k)) fixed[k] = v;
    SymmetricDifference diff;
    {
        Phase ph(tm.raw_eval);
        symmetric_diff(db, q1, q2, options.params);
        try {
            diff = symmetric_diff(db, inner.first, inner.second, fixed);
        } catch (const QueriesAgree &) {
            throw NotHeuristicEligible("the aggregation inputs agree on the database");
        }
    }

    std::vector<AggShape> shapes{*s1, *s2};
    std::vector<std::pair<bool, Tuple>> targets;
    for (const auto &t : diff.left_only.rows) targets.emplace_back(true, t);
    for (const auto &t : diff.right_only.rows) targets.emplace_back(false, t);
    ProvStore store;
    std::size_t attempts = 0;
    for (const auto &[left, t] : targets) {
        const auto &a = left ? inner.first : inner.second;
        const auto &b = left ? inner.second : inner.first;
        std::size_t keys = (left ? s1 : s2)->group->attributes.size();
        MinOnesProblem p;
        {
            Phase ph(tm.prov_eval);
            p.hard_bool.push_back(prov_of_tuple(db, a, b, t, store, fixed));
            // Other members of t's group may be needed when the first candidate leaves the aggregates equal.
            ColumnFilter same_group;
            for (std::size_t i = 0; i < keys; ++i) same_group.emplace_back(i, t[i]);
            std::vector<Prov> members;
            for (const auto *q : {&inner.first, &inner.second})
                for (const auto &r : eval_prov_potential(db, q->plan, store, fixed, same_group).rows)
                    members.push_back(r.prov);
            p.boolean_vars = variables(members);
            add_foreign_keys(db, store, p);
        }
        while (true) {
            if (attempts == options.heuristic_retries)
                throw RetriesExhausted("no verified counterexample after " + std::to_string(attempts) + " models");
            ++attempts;
            Model m;
            {
                Phase ph(tm.solve);
                try {
                    m = solve(p, db, options, budget);
                } catch (const Unsat &) {
                    break;
                }
            }
            auto ids = fk_closure(db, m.chosen);
            {
                Phase ph(tm.raw_eval);
                for (const auto &setting : heuristic_settings(db, ids, shapes, free, fixed, options.params)) {
                    auto params = merged(fixed, setting);
                    if (not verify_counterexample(db, q1, q2, ids, params)) continue;
                    Counterexample c;
                    c.ids = ids;
                    c.strategy = "agg_heuristic";
                    c.attempts = attempts;
                    return finish(db, q1, q2, std::move(c), params, tm);
                }
            }
            std::vector<Prov> flips;
            for (auto v : problem_variables(p))
                flips.push_back(m.chosen.count(v) ? store.negate(store.var(v)) : store.var(v));
            p.hard_bool.push_back(store.disj(flips));
        }
    }
    throw RetriesExhausted("every candidate tuple of the aggregation inputs was exhausted after " +
                           std::to_string(attempts) + " models");
}

std::optional<std::string> fastpath_class(const TypedQuery &q1, const TypedQuery &q2)
{
    auto c1 = classify(q1), c2 = classify(q2);
    auto fast = [](QueryClass c) {
        return c == QueryClass::SJ or c == QueryClass::SPU or c == QueryClass::JUstar or c == QueryClass::SPJU;
    };
    if (is_monotone(c1) and is_monotone(c2)) {
        if (fast(c1)) return std::string(to_string(c1));
        if (fast(c2)) return std::string(to_string(c2));
        return std::nullopt;
    }
    auto star = [](QueryClass c) { return is_monotone(c) or c == QueryClass::SPJUDstar; };
    if (star(c1) and star(c2)) return std::string(to_string(QueryClass::SPJUDstar));
    return std::nullopt;
}

Counterexample fastpath(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const FinderOptions &options,
                        Timings *timings)
{
    Timings local;
    Timings &tm = timings ? *timings : local;
    auto cls = fastpath_class(q1, q2);
    if (not cls)
        throw NotEligible("no fast path for " + std::string(to_string(classify(q1))) + " / " +
                          std::string(to_string(classify(q2))));
    bool monotone = is_monotone(classify(q1)) and is_monotone(classify(q2));
    Budget budget(options.timeout_seconds);
    budget.left();
    {
        Phase ph(tm.raw_eval);
        symmetric_diff(db, q1, q2, options.params);
    }
    ProvStore store;
    std::optional<Counterexample> best;
    std::size_t unions = 0;
    for (int dir = 0; dir < 2; ++dir) {
        const auto &a = dir ? q2 : q1;
        const auto &b = dir ? q1 : q2;
        AnnotatedRelation rel;
        std::vector<const Plan *> leaves;
        if (monotone) {
            leaves.push_back(&a.plan);
        } else {
            monotone_leaves(a.plan, leaves);
            monotone_leaves(b.plan, leaves);
        }
        {
            Phase ph(tm.prov_eval);
            rel = eval_prov_potential(db, difference_plan(a.plan, b.plan), store, options.params);
        }
        for (const auto &row : rel.rows) {
            if (row.prov.is_false()) continue;
            budget.left();
            // Minimal witnesses of t per leaf; a leaf may also be left without t (the empty option).
            std::vector<std::vector<std::vector<TupleId>>> options_per_leaf;
            {
                Phase ph(tm.prov_eval);
                ColumnFilter exact;
                for (std::size_t i = 0; i < row.values.size(); ++i) exact.emplace_back(i, row.values[i]);
                for (auto *leaf : leaves) {
                    std::vector<std::vector<TupleId>> opts;
                    if (not monotone) opts.emplace_back();
                    auto lrel = eval_prov_potential(db, *leaf, store, options.params, exact);
                    if (const auto *r = lrel.find(row.values))
                        for (const auto &m : to_dnf(r->prov).minterms) opts.push_back(m.positive);
                    options_per_leaf.push_back(std::move(opts));
                }
            }
            Phase ph(tm.solve);
            if (std::any_of(options_per_leaf.begin(), options_per_leaf.end(), [](const auto &o) { return o.empty(); }))
                continue;
            std::vector<std::size_t> pick(options_per_leaf.size(), 0);
            while (true) {
                if (++unions > options.union_cap)
                    throw CapExceeded("more than " + std::to_string(options.union_cap) + " witness unions");
                if (unions % 256 == 0) budget.left();
                IdSet u;
                for (std::size_t i = 0; i < pick.size(); ++i)
                    u.insert(options_per_leaf[i][pick[i]].begin(), options_per_leaf[i][pick[i]].end());
                if (not best or u.size() <= best->ids.size()) {
                    auto c = fk_closure(db, u);
                    if ((not best or better(c, best->ids)) and evaluate_on_set(row.prov, c)) {
                        best = Counterexample{};
                        best->ids = c;
                        best->witness_tuple = row.values;
                    }
                }
                std::size_t i = 0;
                while (i < pick.size() and ++pick[i] == options_per_leaf[i].size()) pick[i++] = 0;
                if (i == pick.size()) break;
            }
        }
    }
    if (not best) throw NoModelFound("no union of minimal witnesses separates the queries");
    best->strategy = "fastpath(" + *cls + ")";
    return finish(db, q1, q2, std::move(*best), options.params, tm);
}

Counterexample brute_force(const Database &db, const TypedQuery &q1, const TypedQuery &q2,
                           const FinderOptions &options, Timings *timings)
{
    Timings local;
    Timings &tm = timings ? *timings : local;
    if (db.size() > options.brute_cap)
        throw CapExceeded("database has " + std::to_string(db.size()) + " tuples, the exhaustive search cap is " +
                          std::to_string(options.brute_cap));
    std::set<std::string> free;
    if (options.parameterize) {
        free = having_params(q1.ast);
        free.merge(having_params(q2.ast));
    }
    ParamAssignment fixed;
    for (const auto &[k, v] : options.params)
        if (not free.count(k)) fixed[k] = v;
    Budget budget(options.timeout_seconds);
    budget.left();
    auto search = [&]() -> std::optional<std::pair<IdSet, ParamAssignment>> {
        Phase ph(tm.raw_eval);
        if (free.empty()) symmetric_diff(db, q1, q2, options.params);
        auto ids = all_ids(db);
        const std::size_t n = ids.size();
        for (std::size_t k = 0; k <= n; ++k) {
            std::vector<std::size_t> idx(k);
            for (std::size_t i = 0; i < k; ++i) idx[i] = i;
            while (true) {
                IdSet s;
                for (auto i : idx) s.insert(ids[i]);
                if (fk_closure(db, s) == s) {
                    budget.left();
                    auto sub = restrict(db, s);
                    for (const auto &setting : oracle_grid(sub, q1, q2, free, fixed, options.params)) {
                        auto params = merged(fixed, setting);
                        if (eval_plain(sub, q1, params) != eval_plain(sub, q2, params)) return std::pair{s, params};
                    }
                }
                // Next k-combination in lexicographic order.
                std::size_t i = k;
                while (i > 0 and idx[i - 1] == n - k + i - 1) --i;
                if (i == 0) break;
                ++idx[i - 1];
                for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
            }
        }
        return std::nullopt;
    };
    auto found = search();
    if (not found) throw QueriesAgree();
    Counterexample c;
    c.ids = found->first;
    c.strategy = "brute_force";
    return finish(db, q1, q2, std::move(c), found->second, tm);
}

Report find(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const FinderOptions &options)
{
    Report rep;
    Timings &tm = rep.timings;
    Budget budget(options.timeout_seconds);
    // Fallbacks get what is left of the budget.
    auto remaining = [&] {
        auto rest = options;
        rest.timeout_seconds = budget.left();
        return rest;
    };
    auto run = [&]() -> Counterexample {
        switch (options.strategy) {
            case Strategy::Basic: return basic(db, q1, q2, options, &tm);
            case Strategy::OptSigma: return opt_sigma(db, q1, q2, options, &tm);
            case Strategy::AggBasic: return agg_basic(db, q1, q2, options.parameterize, options, &tm);
            case Strategy::AggParam: return agg_basic(db, q1, q2, true, options, &tm);
            case Strategy::AggHeuristic: return agg_heuristic(db, q1, q2, options, &tm);
            case Strategy::Fastpath: return fastpath(db, q1, q2, options, &tm);
            case Strategy::BruteForce: return brute_force(db, q1, q2, options, &tm);
            case Strategy::Auto: break;
        }
        if (has_agg(q1) or has_agg(q2)) {
            try {
                return agg_heuristic(db, q1, q2, options, &tm);
            } catch (const NotHeuristicEligible &) {
            } catch (const RetriesExhausted &) {
            }
            return agg_basic(db, q1, q2, options.parameterize, remaining(), &tm);
        }
        if (fastpath_class(q1, q2)) {
            try {
                return fastpath(db, q1, q2, options, &tm);
            } catch (const DnfOverflow &) {
            } catch (const CapExceeded &) {
            }
        }
        return opt_sigma(db, q1, q2, remaining(), &tm);
    };
    try {
        rep.counterexample = run();
    } catch (const QueriesAgree &) {
        rep.agree = true;
        return rep;
    }
    const auto &c = rep.counterexample;
    {
        Phase ph(tm.raw_eval);
        auto sub = restrict(db, c.ids);
        auto params = c.param_setting ? merged(options.params, *c.param_setting) : options.params;
        rep.q1_result = eval_plain(sub, q1, params);
        rep.q2_result = eval_plain(sub, q2, params);
    }
    const auto &s = c.strategy;
    if (s == "opt_sigma")
        rep.optimum_guarantee = "per-tuple";
    else if (s == "agg_heuristic" or s == "basic(enumerate)")
        rep.optimum_guarantee = "none";
    else
        rep.optimum_guarantee = "global";
    return rep;
}

namespace {

nlohmann::json to_json(const Value &v)
{
    if (v.is_text()) return v.text();
    if (v.is_bool()) return v.boolean();
    const auto &r = v.number();
    if (r.denominator() == 1) return r.numerator();
    return double(r.numerator()) / double(r.denominator());
}

nlohmann::json rows_json(const std::vector<Tuple> &rows)
{
    auto out = nlohmann::json::array();
    for (const auto &row : rows) {
        auto r = nlohmann::json::array();
        for (const auto &v : row) r.push_back(to_json(v));
        out.push_back(std::move(r));
    }
    return out;
}

}

nlohmann::json to_json(const Relation &r)
{
    auto cols = nlohmann::json::array();
    for (const auto &c : r.schema) cols.push_back(c.name);
    return {{"columns", cols}, {"rows", rows_json(r.rows)}};
}

nlohmann::json to_json(const Report &r, const Database &db)
{
    nlohmann::json out;
    out["verdict"] = r.agree ? "agree" : "counterexample";
    out["timings_ms"] = {{"raw_eval", r.timings.raw_eval}, {"prov_eval", r.timings.prov_eval}, {"solve", r.timings.solve}};
    if (r.agree) return out;
    const auto &c = r.counterexample;
    out["strategy"] = c.strategy;
    out["optimum_guarantee"] = r.optimum_guarantee;
    nlohmann::json cex;
    cex["size"] = c.size();
    cex["verified"] = c.verified;
    auto ids = nlohmann::json::array();
    for (auto id : c.ids) ids.push_back(db.alias(id));
    cex["ids"] = ids;
    cex["params"] = nlohmann::json::object();
    if (c.param_setting)
        for (const auto &[k, v] : *c.param_setting) cex["params"][k] = v;
    if (c.witness_tuple) {
        auto w = nlohmann::json::array();
        for (const auto &v : *c.witness_tuple) w.push_back(to_json(v));
        cex["witness"] = w;
    }
    nlohmann::json tuples = nlohmann::json::object();
    for (std::size_t rel = 0; rel < db.relation_count(); ++rel) {
        const auto &schema = db.schema(rel);
        std::vector<Tuple> rows;
        auto rel_ids = nlohmann::json::array();
        for (auto id : c.ids)
            if (id.relation == rel) {
                rows.push_back(db.row(id).values);
                rel_ids.push_back(db.alias(id));
            }
        if (rows.empty()) continue;
        auto cols = nlohmann::json::array();
        for (const auto &a : schema.attributes) cols.push_back(a.name);
        tuples[schema.name] = {{"columns", cols}, {"rows", rows_json(rows)}, {"ids", rel_ids}};
    }
    cex["tuples"] = tuples;
    out["counterexample"] = cex;
    out["q1_result"] = to_json(r.q1_result);
    out["q2_result"] = to_json(r.q2_result);
    return out;
}

}
