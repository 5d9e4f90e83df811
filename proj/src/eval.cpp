#include "cex/eval.hpp"

#include "cex/error.hpp"
#include <algorithm>
#include <optional>
#include <unordered_map>

namespace cex {

bool Relation::contains(const Tuple &t) const { return std::binary_search(rows.begin(), rows.end(), t); }

const AnnotatedRow * AnnotatedRelation::find(const Tuple &t) const
{
    auto it = std::lower_bound(rows.begin(), rows.end(), t,
                               [](const AnnotatedRow &r, const Tuple &v) { return r.values < v; });
    return it != rows.end() and it->values == t ? &*it : nullptr;
}

namespace {

Value operand_value(const BoundOperand &o, const Tuple &row, const ParamAssignment &params)
{
    switch (o.kind) {
        case Operand::Kind::Attribute: return row[o.column];
        case Operand::Kind::Constant: return o.value;
        case Operand::Kind::Parameter: {
            auto it = params.find(o.param);
            if (it == params.end()) throw MissingParam("no value given for parameter @" + o.param);
            return Value(it->second);
        }
    }
    return {};
}

}

bool evaluate_predicate(const BoundPredicate &p, const Tuple &row, const ParamAssignment &params)
{
    switch (p.kind) {
        case Predicate::Kind::Compare:
            return compare(operand_value(p.lhs, row, params), p.op, operand_value(p.rhs, row, params));
        case Predicate::Kind::Not: return not evaluate_predicate(p.children[0], row, params);
        case Predicate::Kind::And:
            return std::all_of(p.children.begin(), p.children.end(),
                               [&](const BoundPredicate &c) { return evaluate_predicate(c, row, params); });
        case Predicate::Kind::Or:
            return std::any_of(p.children.begin(), p.children.end(),
                               [&](const BoundPredicate &c) { return evaluate_predicate(c, row, params); });
    }
    return false;
}

namespace {

struct PlainSemantics
{
    struct Annotation { };

    Annotation base(TupleId) { return {}; }
    Annotation conj(Annotation, Annotation) { return {}; }
    Annotation disj(const std::vector<Annotation> &) { return {}; }
    std::optional<Annotation> minus(Annotation a, const Annotation *b) const
    {
        if (b) return std::nullopt;
        return a;
    }
    static constexpr bool aggregates = true;
};

struct ProvSemantics
{
    using Annotation = Prov;

    ProvStore &store;

    Prov base(TupleId id) { return store.var(id); }
    Prov conj(Prov a, Prov b) { return store.conj(a, b); }
    Prov disj(const std::vector<Prov> &as) { return as.size() == 1 ? as.front() : store.disj(as); }
    std::optional<Prov> minus(Prov a, const Prov *b)
    {
        if (not b) return a;
        auto r = store.conj(a, store.negate(*b));
        if (r.is_false()) return std::nullopt;
        return r;
    }
    static constexpr bool aggregates = false;
};

/// Equalities between a left and a right column inside a theta-join predicate's top-level conjunction.
std::vector<std::pair<std::size_t, std::size_t>> equi_keys(const BoundPredicate &p, std::size_t left_arity)
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    auto take = [&](const BoundPredicate &c) {
        if (c.kind != Predicate::Kind::Compare or c.op != CmpOp::Eq) return;
        if (c.lhs.kind != Operand::Kind::Attribute or c.rhs.kind != Operand::Kind::Attribute) return;
        auto a = c.lhs.column, b = c.rhs.column;
        if (a >= left_arity and b < left_arity) std::swap(a, b);
        if (a < left_arity and b >= left_arity) out.emplace_back(a, b - left_arity);
    };
    if (p.kind == Predicate::Kind::And)
        for (const auto &c : p.children) take(c);
    else
        take(p);
    return out;
}

Tuple pick(const Tuple &t, const std::vector<std::size_t> &cols)
{
    Tuple out;
    out.reserve(cols.size());
    for (auto c : cols) out.push_back(t[c]);
    return out;
}

Value aggregate(AggFunc f, const std::vector<Rational> &values, std::size_t count)
{
    switch (f) {
        case AggFunc::Count: return Value(Rational(std::int64_t(count)));
        case AggFunc::Sum: {
            Rational s(0);
            for (const auto &v : values) s += v;
            return Value(s);
        }
        case AggFunc::Avg: {
            Rational s(0);
            for (const auto &v : values) s += v;
            return Value(s / Rational(std::int64_t(values.size())));
        }
        case AggFunc::Min: return Value(*std::min_element(values.begin(), values.end()));
        case AggFunc::Max: return Value(*std::max_element(values.begin(), values.end()));
    }
    return {};
}

template <class Sem>
class Evaluator
{
    public:
    using A = typename Sem::Annotation;
    using Rows = std::vector<std::pair<Tuple, A>>;

    Evaluator(const Database &db, Sem sem, const ParamAssignment &params) : db_(db), sem_(sem), params_(params) { }

    Rows eval(const Plan &p, const ColumnFilter &filter)
    {
        switch (p.kind) {
            case NodeKind::Relation: {
                Rows out;
                for (const auto &row : db_.rows(p.relation)) {
                    bool keep = std::all_of(filter.begin(), filter.end(),
                                            [&](const auto &f) { return row.values[f.first] == f.second; });
                    if (keep) out.emplace_back(row.values, sem_.base(row.id));
                }
                // Relations without a key may hold the same row twice.
                return dedupe(std::move(out));
            }
            case NodeKind::Select: {
                auto in = eval(p.children[0], filter);
                Rows out;
                for (auto &r : in)
                    if (evaluate_predicate(p.predicate, r.first, params_)) out.push_back(std::move(r));
                return out;
            }
            case NodeKind::Project: {
                ColumnFilter down;
                for (const auto &[c, v] : filter) down.emplace_back(p.columns[c], v);
                auto in = eval(p.children[0], down);
                Rows out;
                out.reserve(in.size());
                for (auto &r : in) out.emplace_back(pick(r.first, p.columns), r.second);
                return dedupe(std::move(out));
            }
            case NodeKind::Rename: return eval(p.children[0], filter);
            case NodeKind::Join: return join(p, filter);
            case NodeKind::Union: {
                auto out = eval(p.children[0], filter);
                auto right = eval(p.children[1], filter);
                out.insert(out.end(), std::make_move_iterator(right.begin()), std::make_move_iterator(right.end()));
                return dedupe(std::move(out));
            }
            case NodeKind::Difference: {
                auto left = eval(p.children[0], filter);
                auto right = eval(p.children[1], filter);
                std::unordered_map<Tuple, std::size_t, TupleHash> index;
                for (std::size_t i = 0; i < right.size(); ++i) index.emplace(right[i].first, i);
                Rows out;
                for (auto &r : left) {
                    auto it = index.find(r.first);
                    auto a = sem_.minus(r.second, it == index.end() ? nullptr : &right[it->second].second);
                    if (a) out.emplace_back(std::move(r.first), *a);
                }
                return out;
            }
            case NodeKind::GroupAgg: {
                if constexpr (not Sem::aggregates) {
                    throw AggRestrictionViolated("aggregates need the aggregate provenance evaluator");
                } else {
                    auto out = group(p);
                    std::erase_if(out, [&](const auto &r) {
                        return not std::all_of(filter.begin(), filter.end(),
                                               [&](const auto &f) { return r.first[f.first] == f.second; });
                    });
                    return out;
                }
            }
        }
        return {};
    }

    private:
    Rows dedupe(Rows rows)
    {
        std::unordered_map<Tuple, std::size_t, TupleHash> index;
        std::vector<Tuple> order;
        std::vector<std::vector<A>> annotations;
        for (auto &r : rows) {
            auto [it, fresh] = index.emplace(r.first, order.size());
            if (fresh) {
                order.push_back(std::move(r.first));
                annotations.emplace_back();
            }
            annotations[it->second].push_back(r.second);
        }
        Rows out;
        out.reserve(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) out.emplace_back(std::move(order[i]), sem_.disj(annotations[i]));
        return out;
    }

    Rows join(const Plan &p, const ColumnFilter &filter)
    {
        const auto la = p.children[0].schema.size();
        ColumnFilter left_filter, right_filter;
        for (const auto &[c, v] : filter) {
            if (c < la) {
                left_filter.emplace_back(c, v);
                for (const auto &[l, r] : p.join_keys)
                    if (l == c) right_filter.emplace_back(r, v);
            } else if (p.has_predicate) {
                right_filter.emplace_back(c - la, v);
            } else {
                right_filter.emplace_back(p.right_keep[c - la], v);
            }
        }
        auto left = eval(p.children[0], left_filter);
        auto right = eval(p.children[1], right_filter);
        auto keys = p.has_predicate ? equi_keys(p.predicate, la) : p.join_keys;

        auto combine = [&](const Tuple &l, const Tuple &r) {
            Tuple t = l;
            if (p.has_predicate) t.insert(t.end(), r.begin(), r.end());
            else
                for (auto j : p.right_keep) t.push_back(r[j]);
            return t;
        };
        Rows out;
        auto emit = [&](const std::pair<Tuple, A> &l, const std::pair<Tuple, A> &r) {
            auto t = combine(l.first, r.first);
            if (p.has_predicate and not evaluate_predicate(p.predicate, t, params_)) return;
            out.emplace_back(std::move(t), sem_.conj(l.second, r.second));
        };
        if (keys.empty()) {
            for (const auto &l : left)
                for (const auto &r : right) emit(l, r);
            return out;
        }
        std::vector<std::size_t> lk, rk;
        for (const auto &[l, r] : keys) {
            lk.push_back(l);
            rk.push_back(r);
        }
        std::unordered_map<Tuple, std::vector<std::size_t>, TupleHash> index;
        for (std::size_t i = 0; i < right.size(); ++i) index[pick(right[i].first, rk)].push_back(i);
        for (const auto &l : left) {
            auto it = index.find(pick(l.first, lk));
            if (it == index.end()) continue;
            for (auto i : it->second) emit(l, right[i]);
        }
        // Inputs are duplicate-free and an output row determines both input rows, so no dedupe is needed.
        return out;
    }

    Rows group(const Plan &p)
    {
        auto in = eval(p.children[0], {});
        std::map<Tuple, std::vector<const Tuple *>> groups;
        for (const auto &r : in) groups[pick(r.first, p.columns)].push_back(&r.first);
        Rows out;
        for (const auto &[key, members] : groups) {
            Tuple t = key;
            for (const auto &a : p.aggregates) {
                std::vector<Rational> values;
                if (a.func != AggFunc::Count)
                    for (auto *m : members) values.push_back((*m)[a.column].number());
                t.push_back(aggregate(a.func, values, members.size()));
            }
            out.emplace_back(std::move(t), A{});
        }
        return out;
    }

    const Database &db_;
    Sem sem_;
    const ParamAssignment &params_;
};

template <class Rows>
void sort_rows(Rows &rows)
{
    std::sort(rows.begin(), rows.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
}

}

Relation eval_plain(const Database &db, const Plan &plan, const ParamAssignment &params, const ColumnFilter &filter)
{
    Evaluator<PlainSemantics> ev(db, {}, params);
    auto rows = ev.eval(plan, filter);
    Relation out{plan.schema, {}};
    out.rows.reserve(rows.size());
    for (auto &r : rows) out.rows.push_back(std::move(r.first));
    std::sort(out.rows.begin(), out.rows.end());
    return out;
}

Relation eval_plain(const Database &db, const TypedQuery &q, const ParamAssignment &params)
{
    return eval_plain(db, q.plan, params);
}

AnnotatedRelation eval_prov_potential(const Database &db, const Plan &plan, ProvStore &store,
                                      const ParamAssignment &params, const ColumnFilter &filter)
{
    Evaluator<ProvSemantics> ev(db, ProvSemantics{store}, params);
    auto rows = ev.eval(plan, filter);
    sort_rows(rows);
    AnnotatedRelation out{plan.schema, {}};
    out.rows.reserve(rows.size());
    for (auto &r : rows) out.rows.push_back({std::move(r.first), r.second});
    return out;
}

AnnotatedRelation eval_prov(const Database &db, const TypedQuery &q, ProvStore &store, const ParamAssignment &params)
{
    auto all = eval_prov_potential(db, q.plan, store, params);
    std::erase_if(all.rows, [](const AnnotatedRow &r) {
        return not evaluate_with(r.prov, [](TupleId) { return true; });
    });
    return all;
}

Plan difference_plan(const Plan &q1, const Plan &q2)
{
    Plan p;
    p.kind = NodeKind::Difference;
    p.schema = q1.schema;
    p.children = {q1, q2};
    return p;
}

Prov potential_prov_of_tuple(const Database &db, const Plan &q1, const Plan &q2, const Tuple &t, ProvStore &store,
                             const ParamAssignment &params)
{
    if (t.size() != q1.schema.size()) throw TypeError("tuple arity does not match the query schema");
    ColumnFilter filter;
    for (std::size_t i = 0; i < t.size(); ++i) filter.emplace_back(i, t[i]);
    auto rel = eval_prov_potential(db, difference_plan(q1, q2), store, params, filter);
    auto *row = rel.find(t);
    return row ? row->prov : store.constant(false);
}

Prov prov_of_tuple(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const Tuple &t, ProvStore &store,
                   const ParamAssignment &params)
{
    if (t.size() != q1.schema.size() or not eval_plain(db, q1.plan, params).contains(t) or
        eval_plain(db, q2.plan, params).contains(t))
        throw TupleNotInDifference(render_tuple(t) + " is not in Q1(D) \\ Q2(D)");
    return potential_prov_of_tuple(db, q1.plan, q2.plan, t, store, params);
}

SymmetricDifference symmetric_diff(const Database &db, const TypedQuery &q1, const TypedQuery &q2,
                                   const ParamAssignment &params)
{
    auto r1 = eval_plain(db, q1.plan, params);
    auto r2 = eval_plain(db, q2.plan, params);
    SymmetricDifference out{{q1.schema, {}}, {q1.schema, {}}};
    std::set_difference(r1.rows.begin(), r1.rows.end(), r2.rows.begin(), r2.rows.end(),
                        std::back_inserter(out.left_only.rows));
    std::set_difference(r2.rows.begin(), r2.rows.end(), r1.rows.begin(), r1.rows.end(),
                        std::back_inserter(out.right_only.rows));
    if (out.left_only.rows.empty() and out.right_only.rows.empty()) throw QueriesAgree();
    return out;
}

std::string dump_tsv(const AnnotatedRelation &r, const VarNamer &name)
{
    std::string out;
    for (const auto &c : r.schema) out += c.name + "\t";
    out += "prov\n";
    for (const auto &row : r.rows) {
        for (const auto &v : row.values) out += v.render() + "\t";
        out += render_infix(row.prov, name) + "\n";
    }
    return out;
}

}
