#include "cex/typed_query.hpp"

#include "cex/error.hpp"
#include <algorithm>

namespace cex {

std::string render_schema(const Schema &s)
{
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i)
        out += (i ? ", " : "") + s[i].name + ":" + std::string(to_string(s[i].type));
    return out + ")";
}

bool contains_kind(const QueryAst &q, NodeKind kind)
{
    if (q.kind == kind) return true;
    return std::any_of(q.children.begin(), q.children.end(), [&](const QueryAst &c) { return contains_kind(c, kind); });
}

namespace {

std::size_t find_column(const Schema &s, const std::string &name, const char *context)
{
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i].name == name) return i;
    throw TypeError("unknown attribute '" + name + "' in " + context + "; available " + render_schema(s));
}

AttributeType constant_type(const Value &v)
{
    if (v.is_text()) return AttributeType::Text;
    if (v.is_bool()) return AttributeType::Boolean;
    return v.number().denominator() == 1 ? AttributeType::Integer : AttributeType::Rational;
}

class Checker
{
    public:
    explicit Checker(const Database &db) : db_(db) { }

    std::set<std::string> params;

    Plan check(const QueryAst &q)
    {
        Plan p;
        p.kind = q.kind;
        switch (q.kind) {
            case NodeKind::Relation: {
                auto r = db_.relation_index(q.relation);
                if (not r) throw TypeError("unknown relation '" + q.relation + "'");
                p.relation = *r;
                for (const auto &a : db_.schema(*r).attributes) p.schema.push_back({a.name, a.type, false});
                return p;
            }
            case NodeKind::Select: {
                p.children.push_back(check(q.children[0]));
                p.schema = p.children[0].schema;
                p.has_predicate = true;
                p.predicate = bind(q.predicate, p.schema, "selection");
                return p;
            }
            case NodeKind::Project: {
                p.children.push_back(check(q.children[0]));
                const auto &in = p.children[0].schema;
                std::set<std::string> seen;
                for (const auto &a : q.attributes) {
                    if (not seen.insert(a).second) throw TypeError("attribute '" + a + "' projected twice");
                    auto c = find_column(in, a, "projection");
                    p.columns.push_back(c);
                    p.schema.push_back(in[c]);
                }
                return p;
            }
            case NodeKind::Rename: {
                p.children.push_back(check(q.children[0]));
                p.schema = p.children[0].schema;
                std::set<std::string> renamed;
                for (const auto &[from, to] : q.renames) {
                    if (not renamed.insert(from).second) throw TypeError("attribute '" + from + "' renamed twice");
                    auto c = find_column(p.children[0].schema, from, "rename");
                    p.schema[c].name = to;
                }
                std::set<std::string> names;
                for (const auto &c : p.schema)
                    if (not names.insert(c.name).second)
                        throw TypeError("rename produces duplicate attribute '" + c.name + "'");
                return p;
            }
            case NodeKind::Join: {
                p.children.push_back(check(q.children[0]));
                p.children.push_back(check(q.children[1]));
                const auto &l = p.children[0].schema;
                const auto &r = p.children[1].schema;
                p.schema = l;
                if (q.has_predicate) {
                    for (const auto &c : r) {
                        for (const auto &lc : l)
                            if (lc.name == c.name)
                                throw TypeError("theta join inputs share attribute '" + c.name + "'; rename one side");
                        p.schema.push_back(c);
                    }
                    p.has_predicate = true;
                    p.predicate = bind(q.predicate, p.schema, "join predicate");
                    return p;
                }
                for (std::size_t j = 0; j < r.size(); ++j) {
                    bool shared = false;
                    for (std::size_t i = 0; i < l.size(); ++i) {
                        if (l[i].name != r[j].name) continue;
                        if (not comparable(l[i].type, r[j].type))
                            throw TypeError("natural join attribute '" + l[i].name + "' has incomparable types");
                        p.join_keys.emplace_back(i, j);
                        shared = true;
                    }
                    if (not shared) {
                        p.right_keep.push_back(j);
                        p.schema.push_back(r[j]);
                    }
                }
                return p;
            }
            case NodeKind::Union:
            case NodeKind::Difference: {
                if (q.kind == NodeKind::Difference and
                    (contains_kind(q.children[0], NodeKind::GroupAgg) or contains_kind(q.children[1], NodeKind::GroupAgg)))
                    throw AggRestrictionViolated("difference above an aggregate is not supported");
                p.children.push_back(check(q.children[0]));
                p.children.push_back(check(q.children[1]));
                p.schema = compatible(p.children[0].schema, p.children[1].schema,
                                      q.kind == NodeKind::Union ? "union" : "difference");
                return p;
            }
            case NodeKind::GroupAgg: {
                p.children.push_back(check(q.children[0]));
                const auto &in = p.children[0].schema;
                std::set<std::string> names;
                for (const auto &g : q.attributes) {
                    auto c = find_column(in, g, "group by");
                    if (in[c].aggregate)
                        throw AggRestrictionViolated("group by attribute '" + g + "' is an aggregate value");
                    if (not names.insert(g).second) throw TypeError("attribute '" + g + "' grouped twice");
                    p.columns.push_back(c);
                    p.schema.push_back(in[c]);
                }
                for (const auto &a : q.aggregates) {
                    BoundAgg b{a.func, 0, a.attribute.empty()};
                    AttributeType out = AttributeType::Integer;
                    if (not b.star) {
                        b.column = find_column(in, a.attribute, "aggregate");
                        auto t = in[b.column].type;
                        if (a.func != AggFunc::Count and not is_numeric(t))
                            throw TypeError(std::string(to_string(a.func)) + " needs a numeric attribute, '" +
                                            a.attribute + "' is " + std::string(to_string(t)));
                        if (a.func == AggFunc::Avg) out = AttributeType::Rational;
                        else if (a.func != AggFunc::Count) out = t;
                    }
                    if (not names.insert(a.output).second)
                        throw TypeError("duplicate output attribute '" + a.output + "'");
                    p.aggregates.push_back(b);
                    p.schema.push_back({a.output, out, true});
                }
                return p;
            }
        }
        throw TypeError("unknown query node");
    }

    private:
    Schema compatible(const Schema &a, const Schema &b, const char *op)
    {
        bool ok = a.size() == b.size();
        for (std::size_t i = 0; ok and i < a.size(); ++i) ok = comparable(a[i].type, b[i].type);
        if (not ok)
            throw UnionIncompatible(std::string(op) + " inputs are not union-compatible: " + render_schema(a) +
                                    " vs " + render_schema(b));
        Schema out = a;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i].type != b[i].type) out[i].type = AttributeType::Rational;
            out[i].aggregate = a[i].aggregate or b[i].aggregate;
        }
        return out;
    }

    BoundOperand bind(const Operand &o, const Schema &s, const char *context, AttributeType &type)
    {
        BoundOperand b;
        b.kind = o.kind;
        switch (o.kind) {
            case Operand::Kind::Attribute:
                b.column = find_column(s, o.name, context);
                type = s[b.column].type;
                break;
            case Operand::Kind::Constant:
                b.value = o.value;
                type = constant_type(o.value);
                break;
            case Operand::Kind::Parameter:
                b.param = o.name;
                params.insert(o.name);
                type = AttributeType::Integer;
                break;
        }
        return b;
    }

    BoundPredicate bind(const Predicate &p, const Schema &s, const char *context)
    {
        BoundPredicate b;
        b.kind = p.kind;
        b.op = p.op;
        if (p.kind != Predicate::Kind::Compare) {
            for (const auto &c : p.children) b.children.push_back(bind(c, s, context));
            return b;
        }
        AttributeType lt = AttributeType::Integer, rt = AttributeType::Integer;
        b.lhs = bind(p.lhs, s, context, lt);
        b.rhs = bind(p.rhs, s, context, rt);
        if (not comparable(lt, rt))
            throw TypeError("cannot compare " + std::string(to_string(lt)) + " with " + std::string(to_string(rt)) +
                            " in '" + render(p) + "'");
        if (b.lhs.kind == Operand::Kind::Parameter and b.rhs.kind == Operand::Kind::Parameter)
            throw AggRestrictionViolated("comparison '" + render(p) + "' relates two parameters");
        return b;
    }

    const Database &db_;
};

void substitute(Predicate &p, const ParamAssignment &values)
{
    if (p.kind == Predicate::Kind::Compare) {
        for (auto *o : {&p.lhs, &p.rhs}) {
            if (o->kind != Operand::Kind::Parameter) continue;
            if (auto it = values.find(o->name); it != values.end()) *o = Operand::constant(Value(it->second));
        }
    }
    for (auto &c : p.children) substitute(c, values);
}

void substitute(QueryAst &q, const ParamAssignment &values)
{
    if (q.has_predicate) substitute(q.predicate, values);
    for (auto &c : q.children) substitute(c, values);
}

bool spjud_star(const QueryAst &q)
{
    if (q.kind == NodeKind::Difference) return spjud_star(q.children[0]) and spjud_star(q.children[1]);
    if (q.kind == NodeKind::Rename) return spjud_star(q.children[0]);
    return not contains_kind(q, NodeKind::Difference);
}

bool union_below_join(const QueryAst &q, bool under_join)
{
    if (q.kind == NodeKind::Union and under_join) return true;
    bool j = under_join or q.kind == NodeKind::Join;
    return std::any_of(q.children.begin(), q.children.end(), [&](const QueryAst &c) { return union_below_join(c, j); });
}

void operators(const QueryAst &q, std::set<NodeKind> &out)
{
    if (q.kind != NodeKind::Relation and q.kind != NodeKind::Rename) out.insert(q.kind);
    for (const auto &c : q.children) operators(c, out);
}

}

TypedQuery type_check(const QueryAst &q, const Database &db)
{
    Checker checker(db);
    TypedQuery t;
    t.ast = q;
    t.plan = checker.check(q);
    t.schema = t.plan.schema;
    t.params = std::move(checker.params);
    return t;
}

std::pair<TypedQuery, TypedQuery> validate_pair(const QueryAst &q1, const QueryAst &q2, const Database &db)
{
    auto t1 = type_check(q1, db);
    auto t2 = type_check(q2, db);
    bool ok = t1.schema.size() == t2.schema.size();
    for (std::size_t i = 0; ok and i < t1.schema.size(); ++i) ok = comparable(t1.schema[i].type, t2.schema[i].type);
    if (not ok)
        throw UnionIncompatible("query results are not union-compatible: " + render_schema(t1.schema) + " vs " +
                                render_schema(t2.schema));
    return {std::move(t1), std::move(t2)};
}

std::string_view to_string(QueryClass c)
{
    switch (c) {
        case QueryClass::SJ: return "SJ";
        case QueryClass::SPU: return "SPU";
        case QueryClass::PJ: return "PJ";
        case QueryClass::JU: return "JU";
        case QueryClass::JUstar: return "JU*";
        case QueryClass::SPJU: return "SPJU";
        case QueryClass::SPJUDstar: return "SPJUD*";
        case QueryClass::SPJUD: return "SPJUD";
        case QueryClass::AGG: return "AGG";
    }
    return "?";
}

QueryClass classify(const QueryAst &q)
{
    if (contains_kind(q, NodeKind::GroupAgg)) return QueryClass::AGG;
    if (contains_kind(q, NodeKind::Difference)) return spjud_star(q) ? QueryClass::SPJUDstar : QueryClass::SPJUD;
    std::set<NodeKind> ops;
    operators(q, ops);
    auto within = [&](std::initializer_list<NodeKind> allowed) {
        return std::all_of(ops.begin(), ops.end(), [&](NodeKind k) {
            return std::find(allowed.begin(), allowed.end(), k) != allowed.end();
        });
    };
    using K = NodeKind;
    if (within({K::Select, K::Join})) return QueryClass::SJ;
    if (within({K::Select, K::Project, K::Union})) return QueryClass::SPU;
    if (within({K::Project, K::Join})) return QueryClass::PJ;
    if (within({K::Join, K::Union})) return union_below_join(q, false) ? QueryClass::JU : QueryClass::JUstar;
    return QueryClass::SPJU;
}

QueryClass classify(const TypedQuery &q) { return classify(q.ast); }

bool is_monotone(QueryClass c)
{
    return c != QueryClass::SPJUD and c != QueryClass::SPJUDstar and c != QueryClass::AGG;
}

QueryAst substitute_params(const QueryAst &q, const ParamAssignment &values)
{
    QueryAst out = q;
    substitute(out, values);
    return out;
}

TypedQuery bind_params(const TypedQuery &q, const ParamAssignment &values, const Database &db)
{
    for (const auto &[name, v] : values)
        if (not q.params.count(name)) throw UnknownParam("query has no parameter @" + name);
    for (const auto &name : q.params)
        if (not values.count(name)) throw MissingParam("no value given for parameter @" + name);
    if (q.params.empty()) return q;
    return type_check(substitute_params(q.ast, values), db);
}

}
