#pragma once

#include "cex/eval.hpp"
#include "cex/provenance.hpp"
#include "cex/typed_query.hpp"
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cex {

/// One member row of a group: it contributes `value` whenever `guard` holds.
struct AggContribution
{
    Prov guard;
    Rational value;
};

/// Symbolic aggregate: func applied to the values of the contributions whose guard holds.
struct AggValueExpr
{
    AggFunc func = AggFunc::Count;
    std::vector<AggContribution> terms;  ///< ordered by the smallest tuple below each guard
};

/// Exact value of an aggregate as num/den; AVG keeps den = count so that comparisons cross-multiply.
struct AggValue
{
    Rational num;
    Rational den{1};
};

using Indicator = std::function<bool(TupleId)>;

/// Nullopt when the aggregate has no present input and is not SUM/COUNT.
std::optional<AggValue> evaluate(const AggValueExpr &e, const Indicator &present);

struct AggOperand
{
    enum class Kind { Expr, Constant, Parameter };
    Kind kind = Kind::Constant;
    AggValueExpr expr;
    Rational constant;
    std::string param;
};

/// Comparison between aggregates, constants and integer parameters.
struct AggAtom
{
    AggOperand lhs;
    CmpOp op = CmpOp::Eq;
    AggOperand rhs;
};

/** Boolean combination of provenance expressions and aggregate atoms.  The constructors below fold constants. */
struct AggFormula
{
    enum class Kind { Const, Prov, Atom, Not, And, Or, Xor };
    Kind kind = Kind::Const;
    bool value = false;
    Prov prov;
    AggAtom atom;
    std::vector<AggFormula> children;

    static AggFormula constant(bool v);
    static AggFormula of(Prov p);
    static AggFormula of(AggAtom a);
    static AggFormula negate(AggFormula f);
    static AggFormula conj(std::vector<AggFormula> fs);
    static AggFormula disj(std::vector<AggFormula> fs);
    static AggFormula exclusive(AggFormula a, AggFormula b);

    bool is_const(bool v) const { return kind == Kind::Const and value == v; }
};

/// Atom truth for a total assignment; atoms over an empty AVG/MIN/MAX are false.  Throws MissingParam.
bool evaluate(const AggAtom &a, const Indicator &present, const ParamAssignment &params);
bool evaluate(const AggFormula &f, const Indicator &present, const ParamAssignment &params);

/// Values of the non-parameter side at which an atom over `param` may change truth.
std::vector<Rational> breakpoints(const AggAtom &a, const Indicator &present);

std::vector<TupleId> variables(const AggFormula &f);
std::set<std::string> parameters(const AggFormula &f);

/// One output cell of an aggregate query: a concrete value (group key) or an aggregate.
struct SymCell
{
    bool symbolic = false;
    Value value;
    AggValueExpr expr;
};

struct AggRow
{
    Tuple key;                    ///< group-by values
    AggFormula exists;            ///< group present and passing every selection above the grouping
    std::vector<SymCell> cells;   ///< output columns
};

struct AnnotatedAggRelation
{
    Schema schema;
    std::vector<AggRow> rows;     ///< sorted by key
};

/** Symbolic evaluation of a query whose single GroupAgg has only Select, Project and Rename above it and an
 * aggregate-free child.  Parameters named in `fixed` are substituted; the others stay symbolic in the
 * selections above the grouping (and must be fixed below it).  Throws AggRestrictionViolated, MissingParam. */
AnnotatedAggRelation eval_agg_prov(const Database &db, const TypedQuery &q, ProvStore &store,
                                   const ParamAssignment &fixed = {});

/// Formula whose models are exactly the subinstances on which one output row appears in only one result.
struct GroupConstraint
{
    std::string label;      ///< rendered concrete cells of the row(s) concerned
    bool aligned = false;   ///< one group of each query, combined into a single constraint
    AggFormula exists1, exists2;
    AggFormula formula;
};

/** Q1(D′) ≠ Q2(D′) holds iff one of the returned formulas holds.  Rows of the two results that can coincide only
 * with each other get a combined constraint (E1 ⊕ E2) ∨ (E1 ∧ E2 ∧ ¬eq); every other row gets a directional one. */
std::vector<GroupConstraint> difference_constraints(const AnnotatedAggRelation &r1, const AnnotatedAggRelation &r2);

std::string render(const AggValueExpr &e, const VarNamer &name);
std::string render(const AggFormula &f, const VarNamer &name);
/// SMT-LIB term; AVG comparisons are cross-multiplied under a positive-count guard, MIN/MAX become ite chains.
std::string render_smt(const AggFormula &f, const VarNamer &name);

}
