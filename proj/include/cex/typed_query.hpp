#pragma once

#include "cex/catalog.hpp"
#include "cex/ra_ast.hpp"
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cex {

struct Column
{
    std::string name;
    AttributeType type;
    bool aggregate = false;  ///< produced by an aggregate function (directly or through rename/project)

    friend bool operator==(const Column&, const Column&) = default;
};

using Schema = std::vector<Column>;

std::string render_schema(const Schema &s);

/// Predicate operand with attribute references resolved to column positions.
struct BoundOperand
{
    Operand::Kind kind = Operand::Kind::Constant;
    std::size_t column = 0;
    Value value;
    std::string param;
};

struct BoundPredicate
{
    Predicate::Kind kind = Predicate::Kind::Compare;
    CmpOp op = CmpOp::Eq;
    BoundOperand lhs, rhs;
    std::vector<BoundPredicate> children;
};

struct BoundAgg
{
    AggFunc func;
    std::size_t column;  ///< input column; unused for COUNT(*)
    bool star;
};

/** Executable form of a typed query: every name resolved to a column position. */
struct Plan
{
    NodeKind kind = NodeKind::Relation;
    Schema schema;
    std::size_t relation = 0;            ///< Relation
    bool has_predicate = false;
    BoundPredicate predicate;            ///< Select; theta Join (over left ++ right columns)
    std::vector<std::size_t> columns;    ///< Project: source positions; GroupAgg: key positions
    std::vector<std::pair<std::size_t, std::size_t>> join_keys;  ///< natural Join: (left, right) shared columns
    std::vector<std::size_t> right_keep; ///< natural Join: right columns appended to the output
    std::vector<BoundAgg> aggregates;    ///< GroupAgg
    std::vector<Plan> children;
};

struct TypedQuery
{
    QueryAst ast;
    Schema schema;
    std::set<std::string> params;
    Plan plan;
};

/// Resolves names and types against `db`'s schemas.  Throws TypeError, UnionIncompatible, AggRestrictionViolated.
TypedQuery type_check(const QueryAst &q, const Database &db);

/** Types both queries and checks that their outputs are union-compatible (same arity, positionally comparable
 * types).  Throws TypeError, UnionIncompatible, AggRestrictionViolated. */
std::pair<TypedQuery, TypedQuery> validate_pair(const QueryAst &q1, const QueryAst &q2, const Database &db);

enum class QueryClass { SJ, SPU, PJ, JU, JUstar, SPJU, SPJUDstar, SPJUD, AGG };

std::string_view to_string(QueryClass c);
QueryClass classify(const TypedQuery &q);
QueryClass classify(const QueryAst &q);
bool is_monotone(QueryClass c);

using ParamAssignment = std::map<std::string, std::int64_t>;

/// Substitutes every parameter.  Throws MissingParam or UnknownParam.
TypedQuery bind_params(const TypedQuery &q, const ParamAssignment &values, const Database &db);
/// Substitutes the parameters named in `values` and leaves the rest symbolic.
QueryAst substitute_params(const QueryAst &q, const ParamAssignment &values);

bool contains_kind(const QueryAst &q, NodeKind kind);

}
