#pragma once

#include "cex/value.hpp"
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cex {

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view to_string(CmpOp op);
/// The operator with its operands swapped (a < b  ⇔  b > a).
CmpOp mirror(CmpOp op);
CmpOp negate(CmpOp op);
bool compare(const Value &a, CmpOp op, const Value &b);
bool compare(const Rational &a, CmpOp op, const Rational &b);

struct Operand
{
    enum class Kind { Attribute, Constant, Parameter };

    Kind kind = Kind::Constant;
    std::string name;  ///< attribute or parameter name
    Value value;       ///< constant

    static Operand attribute(std::string n) { return {Kind::Attribute, std::move(n), {}}; }
    static Operand constant(Value v) { return {Kind::Constant, {}, std::move(v)}; }
    static Operand parameter(std::string n) { return {Kind::Parameter, std::move(n), {}}; }

    friend bool operator==(const Operand&, const Operand&) = default;
};

struct Predicate
{
    enum class Kind { Compare, And, Or, Not };

    Kind kind = Kind::Compare;
    CmpOp op = CmpOp::Eq;
    Operand lhs, rhs;
    std::vector<Predicate> children;

    static Predicate comparison(Operand l, CmpOp op, Operand r) { return {Kind::Compare, op, std::move(l), std::move(r), {}}; }

    friend bool operator==(const Predicate&, const Predicate&) = default;
};

enum class AggFunc { Sum, Count, Avg, Min, Max };

std::string_view to_string(AggFunc f);

struct AggSpec
{
    AggFunc func = AggFunc::Count;
    std::string attribute;  ///< empty for COUNT(*)
    std::string output;

    friend bool operator==(const AggSpec&, const AggSpec&) = default;
};

enum class NodeKind { Relation, Select, Project, Rename, Join, Union, Difference, GroupAgg };

/** Parsed relational-algebra expression.  Children are held by value; queries are small. */
struct QueryAst
{
    NodeKind kind = NodeKind::Relation;
    std::string relation;                                     ///< Relation
    bool has_predicate = false;                               ///< Select, theta Join
    Predicate predicate;
    std::vector<std::string> attributes;                      ///< Project list, GroupAgg keys
    std::vector<std::pair<std::string, std::string>> renames; ///< Rename: old → new
    std::vector<AggSpec> aggregates;                          ///< GroupAgg
    std::vector<QueryAst> children;

    friend bool operator==(const QueryAst&, const QueryAst&) = default;
};

/// Throws SyntaxError with 1-based line and column.
QueryAst parse_query(std::string_view text);
/// Canonical text in the accepted grammar; parse_query(render(q)) == q.
std::string render(const QueryAst &q);
std::string render(const Predicate &p);

}
