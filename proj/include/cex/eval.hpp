#pragma once

#include "cex/catalog.hpp"
#include "cex/provenance.hpp"
#include "cex/typed_query.hpp"
#include <string>
#include <utility>
#include <vector>

namespace cex {

/// Set-semantics query result; rows sorted by value.
struct Relation
{
    Schema schema;
    std::vector<Tuple> rows;

    bool contains(const Tuple &t) const;
    friend bool operator==(const Relation &a, const Relation &b) { return a.rows == b.rows; }
};

struct AnnotatedRow
{
    Tuple values;
    Prov prov;
};

struct AnnotatedRelation
{
    Schema schema;
    std::vector<AnnotatedRow> rows;  ///< sorted by value

    const AnnotatedRow * find(const Tuple &t) const;
};

/// Equality conditions (output column, value) that the evaluator pushes towards the scans.
using ColumnFilter = std::vector<std::pair<std::size_t, Value>>;

/// Plain evaluation.  Parameters still present in the plan are looked up in `params`; MissingParam otherwise.
Relation eval_plain(const Database &db, const Plan &plan, const ParamAssignment &params = {},
                    const ColumnFilter &filter = {});
Relation eval_plain(const Database &db, const TypedQuery &q, const ParamAssignment &params = {});

/** Provenance of every tuple that appears in the result of some subinstance of `db`, including those absent from
 * the result on `db` itself (only possible below a difference).  Aggregate-free plans only. */
AnnotatedRelation eval_prov_potential(const Database &db, const Plan &plan, ProvStore &store,
                                      const ParamAssignment &params = {}, const ColumnFilter &filter = {});
/// Annotated result on `db`: the value tuples equal eval_plain's.
AnnotatedRelation eval_prov(const Database &db, const TypedQuery &q, ProvStore &store,
                            const ParamAssignment &params = {});

/// Plan for q1 − q2 (children copied); the pair must be union-compatible.
Plan difference_plan(const Plan &q1, const Plan &q2);

/** Provenance of `t` in (q1 − q2) over `db`, evaluated with the equality selection on t pushed to the scans.
 * Throws TupleNotInDifference when t is not in q1(db) \ q2(db). */
Prov prov_of_tuple(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const Tuple &t, ProvStore &store,
                   const ParamAssignment &params = {});
/// Same expression without the membership precondition; constant false when t can never be in the difference.
Prov potential_prov_of_tuple(const Database &db, const Plan &q1, const Plan &q2, const Tuple &t, ProvStore &store,
                             const ParamAssignment &params = {});

struct SymmetricDifference
{
    Relation left_only;   ///< q1 \ q2
    Relation right_only;  ///< q2 \ q1
};

/// Throws QueriesAgree when both directions are empty.
SymmetricDifference symmetric_diff(const Database &db, const TypedQuery &q1, const TypedQuery &q2,
                                   const ParamAssignment &params = {});

bool evaluate_predicate(const BoundPredicate &p, const Tuple &row, const ParamAssignment &params);

/// Debug dump: header line, then one line per row with the rendered provenance in the last column.
std::string dump_tsv(const AnnotatedRelation &r, const VarNamer &name);

}
