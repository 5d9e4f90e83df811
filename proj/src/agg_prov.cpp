#include "cex/agg_prov.hpp"

#include "cex/error.hpp"
#include <algorithm>
#include <map>

namespace cex {

std::optional<AggValue> evaluate(const AggValueExpr &e, const Indicator &present)
{
    Rational sum(0), best(0);
    std::int64_t count = 0;
    for (const auto &t : e.terms) {
        if (not evaluate_with(t.guard, present)) continue;
        if (count == 0) best = t.value;
        else if (e.func == AggFunc::Min) best = std::min(best, t.value);
        else if (e.func == AggFunc::Max) best = std::max(best, t.value);
        sum += t.value;
        ++count;
    }
    switch (e.func) {
        case AggFunc::Count: return AggValue{Rational(count)};
        case AggFunc::Sum: return AggValue{sum};
        case AggFunc::Avg:
            if (count == 0) return std::nullopt;
            return AggValue{sum, Rational(count)};
        case AggFunc::Min:
        case AggFunc::Max:
            if (count == 0) return std::nullopt;
            return AggValue{best};
    }
    return std::nullopt;
}

AggFormula AggFormula::constant(bool v)
{
    AggFormula f;
    f.value = v;
    return f;
}

AggFormula AggFormula::of(Prov p)
{
    if (p.is_true() or p.is_false()) return constant(p.is_true());
    AggFormula f;
    f.kind = Kind::Prov;
    f.prov = p;
    return f;
}

AggFormula AggFormula::of(AggAtom a)
{
    AggFormula f;
    f.kind = Kind::Atom;
    f.atom = std::move(a);
    return f;
}

AggFormula AggFormula::negate(AggFormula f)
{
    if (f.kind == Kind::Const) return constant(not f.value);
    if (f.kind == Kind::Not) return std::move(f.children.front());
    AggFormula n;
    n.kind = Kind::Not;
    n.children.push_back(std::move(f));
    return n;
}

namespace {

AggFormula nary(AggFormula::Kind kind, std::vector<AggFormula> fs)
{
    const bool absorbing = kind == AggFormula::Kind::Or;
    AggFormula out;
    out.kind = kind;
    for (auto &f : fs) {
        if (f.kind == AggFormula::Kind::Const) {
            if (f.value == absorbing) return AggFormula::constant(absorbing);
            continue;
        }
        if (f.kind == kind)
            for (auto &c : f.children) out.children.push_back(std::move(c));
        else
            out.children.push_back(std::move(f));
    }
    if (out.children.empty()) return AggFormula::constant(not absorbing);
    if (out.children.size() == 1) return std::move(out.children.front());
    return out;
}

}

AggFormula AggFormula::conj(std::vector<AggFormula> fs) { return nary(Kind::And, std::move(fs)); }
AggFormula AggFormula::disj(std::vector<AggFormula> fs) { return nary(Kind::Or, std::move(fs)); }

AggFormula AggFormula::exclusive(AggFormula a, AggFormula b)
{
    if (a.kind == Kind::Const) return a.value ? negate(std::move(b)) : b;
    if (b.kind == Kind::Const) return b.value ? negate(std::move(a)) : a;
    AggFormula f;
    f.kind = Kind::Xor;
    f.children.push_back(std::move(a));
    f.children.push_back(std::move(b));
    return f;
}

namespace {

std::optional<AggValue> operand_value(const AggOperand &o, const Indicator &present, const ParamAssignment &params)
{
    switch (o.kind) {
        case AggOperand::Kind::Expr: return evaluate(o.expr, present);
        case AggOperand::Kind::Constant: return AggValue{o.constant};
        case AggOperand::Kind::Parameter: {
            auto it = params.find(o.param);
            if (it == params.end()) throw MissingParam("no value given for parameter @" + o.param);
            return AggValue{Rational(it->second)};
        }
    }
    return std::nullopt;
}

}

bool evaluate(const AggAtom &a, const Indicator &present, const ParamAssignment &params)
{
    auto l = operand_value(a.lhs, present, params);
    auto r = operand_value(a.rhs, present, params);
    if (not l or not r) return false;
    return compare(l->num * r->den, a.op, r->num * l->den);
}

bool evaluate(const AggFormula &f, const Indicator &present, const ParamAssignment &params)
{
    switch (f.kind) {
        case AggFormula::Kind::Const: return f.value;
        case AggFormula::Kind::Prov: return evaluate_with(f.prov, present);
        case AggFormula::Kind::Atom: return evaluate(f.atom, present, params);
        case AggFormula::Kind::Not: return not evaluate(f.children[0], present, params);
        case AggFormula::Kind::And:
            return std::all_of(f.children.begin(), f.children.end(),
                               [&](const AggFormula &c) { return evaluate(c, present, params); });
        case AggFormula::Kind::Or:
            return std::any_of(f.children.begin(), f.children.end(),
                               [&](const AggFormula &c) { return evaluate(c, present, params); });
        case AggFormula::Kind::Xor:
            return evaluate(f.children[0], present, params) != evaluate(f.children[1], present, params);
    }
    return false;
}

std::vector<Rational> breakpoints(const AggAtom &a, const Indicator &present)
{
    const bool lp = a.lhs.kind == AggOperand::Kind::Parameter;
    const bool rp = a.rhs.kind == AggOperand::Kind::Parameter;
    if (lp == rp) return {};
    auto v = operand_value(lp ? a.rhs : a.lhs, present, {});
    if (not v) return {};
    return {v->num / v->den};
}

namespace {

void collect(const AggFormula &f, std::vector<Prov> &provs, std::set<std::string> &params)
{
    auto operand = [&](const AggOperand &o) {
        if (o.kind == AggOperand::Kind::Expr)
            for (const auto &t : o.expr.terms) provs.push_back(t.guard);
        else if (o.kind == AggOperand::Kind::Parameter)
            params.insert(o.param);
    };
    switch (f.kind) {
        case AggFormula::Kind::Const: break;
        case AggFormula::Kind::Prov: provs.push_back(f.prov); break;
        case AggFormula::Kind::Atom:
            operand(f.atom.lhs);
            operand(f.atom.rhs);
            break;
        default:
            for (const auto &c : f.children) collect(c, provs, params);
    }
}

}

std::vector<TupleId> variables(const AggFormula &f)
{
    std::vector<Prov> provs;
    std::set<std::string> params;
    collect(f, provs, params);
    return variables(provs);
}

std::set<std::string> parameters(const AggFormula &f)
{
    std::vector<Prov> provs;
    std::set<std::string> params;
    collect(f, provs, params);
    return params;
}

namespace {

AggOperand cell_operand(const SymCell &c)
{
    AggOperand o;
    if (c.symbolic) {
        o.kind = AggOperand::Kind::Expr;
        o.expr = c.expr;
    } else {
        if (not c.value.is_number()) throw TypeError("only numbers compare with aggregates");
        o.constant = c.value.number();
    }
    return o;
}

AggFormula compare_cells(const SymCell &l, CmpOp op, const SymCell &r)
{
    if (not l.symbolic and not r.symbolic) return AggFormula::constant(compare(l.value, op, r.value));
    return AggFormula::of(AggAtom{cell_operand(l), op, cell_operand(r)});
}

struct PredicateOperand
{
    bool param = false;
    std::string name;
    SymCell cell;
};

PredicateOperand resolve(const BoundOperand &o, const std::vector<SymCell> &cells, const ParamAssignment &fixed)
{
    PredicateOperand out;
    switch (o.kind) {
        case Operand::Kind::Attribute: out.cell = cells[o.column]; break;
        case Operand::Kind::Constant: out.cell.value = o.value; break;
        case Operand::Kind::Parameter: {
            auto it = fixed.find(o.param);
            if (it != fixed.end()) {
                out.cell.value = Value(it->second);
            } else {
                out.param = true;
                out.name = o.param;
            }
            break;
        }
    }
    return out;
}

AggFormula predicate_formula(const BoundPredicate &p, const std::vector<SymCell> &cells,
                             const ParamAssignment &fixed)
{
    switch (p.kind) {
        case Predicate::Kind::Compare: {
            auto l = resolve(p.lhs, cells, fixed);
            auto r = resolve(p.rhs, cells, fixed);
            if (not l.param and not r.param) return compare_cells(l.cell, p.op, r.cell);
            AggAtom a;
            a.op = p.op;
            auto side = [&](const PredicateOperand &o, AggOperand &out) {
                if (o.param) {
                    out.kind = AggOperand::Kind::Parameter;
                    out.param = o.name;
                } else {
                    out = cell_operand(o.cell);
                }
            };
            side(l, a.lhs);
            side(r, a.rhs);
            return AggFormula::of(std::move(a));
        }
        case Predicate::Kind::Not: return AggFormula::negate(predicate_formula(p.children[0], cells, fixed));
        case Predicate::Kind::And:
        case Predicate::Kind::Or: {
            std::vector<AggFormula> fs;
            for (const auto &c : p.children) fs.push_back(predicate_formula(c, cells, fixed));
            return p.kind == Predicate::Kind::And ? AggFormula::conj(std::move(fs)) : AggFormula::disj(std::move(fs));
        }
    }
    return AggFormula::constant(false);
}

bool guard_order(const AggContribution &a, const AggContribution &b)
{
    return std::tie(a.guard.node()->lead, a.guard.node()->serial) < std::tie(b.guard.node()->lead, b.guard.node()->serial);
}

}

AnnotatedAggRelation eval_agg_prov(const Database &db, const TypedQuery &q, ProvStore &store,
                                   const ParamAssignment &fixed)
{
    std::vector<const Plan *> above;
    const Plan *node = &q.plan;
    while (node->kind != NodeKind::GroupAgg) {
        if (node->kind != NodeKind::Select and node->kind != NodeKind::Project and node->kind != NodeKind::Rename)
            throw AggRestrictionViolated("only select, project and rename may appear above the aggregation");
        above.push_back(node);
        node = &node->children[0];
    }
    const Plan &group = *node;
    auto input = eval_prov_potential(db, group.children[0], store, fixed);

    std::map<Tuple, std::vector<const AnnotatedRow *>> groups;
    for (const auto &r : input.rows) {
        Tuple key;
        for (auto c : group.columns) key.push_back(r.values[c]);
        groups[key].push_back(&r);
    }

    AnnotatedAggRelation out{q.schema, {}};
    for (const auto &[key, members] : groups) {
        AggRow row;
        row.key = key;
        std::vector<Prov> guards;
        for (auto *m : members) guards.push_back(m->prov);
        row.exists = AggFormula::of(store.disj(guards));
        for (const auto &k : key) row.cells.push_back(SymCell{false, k, {}});
        for (const auto &a : group.aggregates) {
            SymCell cell{true, {}, {a.func, {}}};
            for (auto *m : members)
                cell.expr.terms.push_back(
                    {m->prov, a.func == AggFunc::Count ? Rational(1) : m->values[a.column].number()});
            std::stable_sort(cell.expr.terms.begin(), cell.expr.terms.end(), guard_order);
            row.cells.push_back(std::move(cell));
        }
        for (auto it = above.rbegin(); it != above.rend(); ++it) {
            const Plan &op = **it;
            if (op.kind == NodeKind::Select) {
                row.exists = AggFormula::conj({std::move(row.exists), predicate_formula(op.predicate, row.cells, fixed)});
            } else if (op.kind == NodeKind::Project) {
                std::vector<SymCell> picked;
                for (auto c : op.columns) picked.push_back(row.cells[c]);
                row.cells = std::move(picked);
            }
        }
        if (not row.exists.is_const(false)) out.rows.push_back(std::move(row));
    }
    return out;
}

namespace {

bool can_coincide(const AggRow &a, const AggRow &b)
{
    for (std::size_t i = 0; i < a.cells.size(); ++i)
        if (not a.cells[i].symbolic and not b.cells[i].symbolic and a.cells[i].value != b.cells[i].value) return false;
    return true;
}

AggFormula same_tuple(const AggRow &a, const AggRow &b)
{
    std::vector<AggFormula> eqs;
    for (std::size_t i = 0; i < a.cells.size(); ++i) eqs.push_back(compare_cells(a.cells[i], CmpOp::Eq, b.cells[i]));
    return AggFormula::conj(std::move(eqs));
}

std::string label(const AggRow &r)
{
    std::string out = "(";
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        if (i) out += ", ";
        out += r.cells[i].symbolic ? std::string(to_string(r.cells[i].expr.func)) : r.cells[i].value.render();
    }
    return out + ")";
}

/// `row` appears on its side and no row of the other side produces the same tuple.
AggFormula only_here(const AggRow &row, const std::vector<AggRow> &other, const std::vector<std::size_t> &partners)
{
    std::vector<AggFormula> parts{row.exists};
    for (auto j : partners)
        parts.push_back(AggFormula::negate(AggFormula::conj({other[j].exists, same_tuple(row, other[j])})));
    return AggFormula::conj(std::move(parts));
}

}

std::vector<GroupConstraint> difference_constraints(const AnnotatedAggRelation &r1, const AnnotatedAggRelation &r2)
{
    std::vector<std::vector<std::size_t>> p1(r1.rows.size()), p2(r2.rows.size());
    for (std::size_t i = 0; i < r1.rows.size(); ++i)
        for (std::size_t j = 0; j < r2.rows.size(); ++j)
            if (can_coincide(r1.rows[i], r2.rows[j])) {
                p1[i].push_back(j);
                p2[j].push_back(i);
            }

    std::vector<GroupConstraint> out;
    std::vector<bool> paired(r2.rows.size(), false);
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
        const auto &a = r1.rows[i];
        if (p1[i].size() == 1 and p2[p1[i][0]].size() == 1) {
            auto j = p1[i][0];
            const auto &b = r2.rows[j];
            paired[j] = true;
            GroupConstraint g{label(a), true, a.exists, b.exists, {}};
            g.formula = AggFormula::disj(
                {AggFormula::exclusive(a.exists, b.exists),
                 AggFormula::conj({a.exists, b.exists, AggFormula::negate(same_tuple(a, b))})});
            out.push_back(std::move(g));
        } else {
            out.push_back({label(a), false, a.exists, AggFormula::constant(false), only_here(a, r2.rows, p1[i])});
        }
    }
    for (std::size_t j = 0; j < r2.rows.size(); ++j) {
        if (paired[j]) continue;
        const auto &b = r2.rows[j];
        out.push_back({label(b), false, AggFormula::constant(false), b.exists, only_here(b, r1.rows, p2[j])});
    }
    std::erase_if(out, [](const GroupConstraint &g) { return g.formula.is_const(false); });
    return out;
}

namespace {

std::string guard_infix(Prov g, const VarNamer &name)
{
    auto s = render_infix(g, name);
    return g.kind() == ProvKind::Var ? s : "(" + s + ")";
}

std::string operand_text(const AggOperand &o, const VarNamer &name)
{
    switch (o.kind) {
        case AggOperand::Kind::Expr: return render(o.expr, name);
        case AggOperand::Kind::Constant: return render_rational(o.constant);
        case AggOperand::Kind::Parameter: return "@" + o.param;
    }
    return {};
}

std::string join_children(const AggFormula &f, const char *sep, const VarNamer &name)
{
    std::string out = "(";
    for (std::size_t i = 0; i < f.children.size(); ++i) {
        if (i) out += sep;
        out += render(f.children[i], name);
    }
    return out + ")";
}

}

std::string render(const AggValueExpr &e, const VarNamer &name)
{
    if (e.terms.empty()) return std::string(to_string(e.func)) + "()";
    std::string out;
    const std::string plus = " +" + std::string(to_string(e.func)) + " ";
    for (std::size_t i = 0; i < e.terms.size(); ++i) {
        if (i) out += plus;
        out += guard_infix(e.terms[i].guard, name) + "⊗" + render_rational(e.terms[i].value);
    }
    return out;
}

std::string render(const AggFormula &f, const VarNamer &name)
{
    switch (f.kind) {
        case AggFormula::Kind::Const: return f.value ? "1" : "0";
        case AggFormula::Kind::Prov: return guard_infix(f.prov, name);
        case AggFormula::Kind::Atom:
            return "[" + operand_text(f.atom.lhs, name) + " " + std::string(to_string(f.atom.op)) + " " +
                   operand_text(f.atom.rhs, name) + "]";
        case AggFormula::Kind::Not: return "not " + render(f.children[0], name);
        case AggFormula::Kind::And: return join_children(f, " and ", name);
        case AggFormula::Kind::Or: return join_children(f, " or ", name);
        case AggFormula::Kind::Xor: return join_children(f, " xor ", name);
    }
    return {};
}

namespace {

std::string smt_number(const Rational &r)
{
    auto integer = [](std::int64_t v) { return v < 0 ? "(- " + std::to_string(-v) + ")" : std::to_string(v); };
    if (r.denominator() == 1) return integer(r.numerator());
    return "(/ " + integer(r.numerator()) + " " + std::to_string(r.denominator()) + ")";
}

std::string smt_sum(const std::vector<std::string> &terms)
{
    if (terms.empty()) return "0";
    if (terms.size() == 1) return terms.front();
    std::string out = "(+";
    for (const auto &t : terms) out += " " + t;
    return out + ")";
}

struct SmtValue
{
    std::string num;
    std::string den;    ///< empty when 1
    std::string guard;  ///< empty when always defined
};

SmtValue smt_value(const AggOperand &o, const VarNamer &name)
{
    if (o.kind == AggOperand::Kind::Constant) return {smt_number(o.constant), {}, {}};
    if (o.kind == AggOperand::Kind::Parameter) return {o.param, {}, {}};
    const auto &e = o.expr;
    std::vector<std::string> indicators, weighted, guards;
    for (const auto &t : e.terms) {
        auto g = render_smt(t.guard, name);
        guards.push_back(g);
        indicators.push_back("(b2i " + g + ")");
        weighted.push_back("(* (b2i " + g + ") " + smt_number(t.value) + ")");
    }
    switch (e.func) {
        case AggFunc::Count: return {smt_sum(indicators), {}, {}};
        case AggFunc::Sum: return {smt_sum(weighted), {}, {}};
        case AggFunc::Avg: {
            auto count = smt_sum(indicators);
            return {smt_sum(weighted), count, "(> " + count + " 0)"};
        }
        case AggFunc::Min:
        case AggFunc::Max: {
            auto order = e.terms;
            std::stable_sort(order.begin(), order.end(), [&](const AggContribution &a, const AggContribution &b) {
                return e.func == AggFunc::Min ? a.value < b.value : a.value > b.value;
            });
            std::string chain = "0";
            for (auto it = order.rbegin(); it != order.rend(); ++it)
                chain = "(ite " + render_smt(it->guard, name) + " " + smt_number(it->value) + " " + chain + ")";
            std::string any = guards.empty() ? "false" : guards.size() == 1 ? guards.front() : [&] {
                std::string s = "(or";
                for (const auto &g : guards) s += " " + g;
                return s + ")";
            }();
            return {chain, {}, any};
        }
    }
    return {};
}

std::string smt_compare(CmpOp op, const std::string &a, const std::string &b)
{
    switch (op) {
        case CmpOp::Eq: return "(= " + a + " " + b + ")";
        case CmpOp::Ne: return "(distinct " + a + " " + b + ")";
        case CmpOp::Lt: return "(< " + a + " " + b + ")";
        case CmpOp::Le: return "(<= " + a + " " + b + ")";
        case CmpOp::Gt: return "(> " + a + " " + b + ")";
        case CmpOp::Ge: return "(>= " + a + " " + b + ")";
    }
    return {};
}

std::string smt_children(const char *op, const AggFormula &f, const VarNamer &name)
{
    std::string out = std::string("(") + op;
    for (const auto &c : f.children) out += " " + render_smt(c, name);
    return out + ")";
}

}

std::string render_smt(const AggFormula &f, const VarNamer &name)
{
    switch (f.kind) {
        case AggFormula::Kind::Const: return f.value ? "true" : "false";
        case AggFormula::Kind::Prov: return render_smt(f.prov, name);
        case AggFormula::Kind::Atom: {
            auto l = smt_value(f.atom.lhs, name);
            auto r = smt_value(f.atom.rhs, name);
            auto scaled = [](const std::string &num, const std::string &den) {
                return den.empty() ? num : "(* " + num + " " + den + ")";
            };
            auto cmp = smt_compare(f.atom.op, scaled(l.num, r.den), scaled(r.num, l.den));
            std::vector<std::string> guards;
            for (const auto *g : {&l.guard, &r.guard})
                if (not g->empty()) guards.push_back(*g);
            if (guards.empty()) return cmp;
            std::string out = "(and";
            for (const auto &g : guards) out += " " + g;
            return out + " " + cmp + ")";
        }
        case AggFormula::Kind::Not: return "(not " + render_smt(f.children[0], name) + ")";
        case AggFormula::Kind::And: return smt_children("and", f, name);
        case AggFormula::Kind::Or: return smt_children("or", f, name);
        case AggFormula::Kind::Xor: return smt_children("distinct", f, name);
    }
    return {};
}

}
