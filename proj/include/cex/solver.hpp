#pragma once

#include "cex/agg_prov.hpp"
#include "cex/provenance.hpp"
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cex {

inline constexpr std::int64_t default_param_bound = 1000000;

struct IntParam
{
    std::string name;
    std::int64_t lo = -default_param_bound;
    std::int64_t hi = default_param_bound;
    std::int64_t preferred = 0;  ///< among satisfying values the closest one wins (smaller on ties)
};

/// Minimise the number of true tuple variables subject to every constraint.
struct MinOnesProblem
{
    std::vector<TupleId> boolean_vars;       ///< sorted; extended with every variable of the constraints
    std::vector<Prov> hard_bool;
    std::optional<AggFormula> agg_formula;
    std::vector<IntParam> int_params;
};

struct Model
{
    IdSet chosen;
    std::size_t cost = 0;
    ParamAssignment params;
};

struct SolveOptions
{
    double timeout_seconds = 30.0;
};

/** Exact minimum-cost model; ties go to the lexicographically smallest chosen set.  Throws Unsat or Timeout.
 * Aggregate atoms and parameters are accepted as well (see solve_with_params). */
Model solve_min_ones(const MinOnesProblem &p, const SolveOptions &options = {});

/** Up to `limit` distinct models; each one is excluded from the search for the next, as a blocking clause over all
 * variables would.  The order is that of a false-first depth-first search. */
std::vector<Model> enumerate_models(const MinOnesProblem &p, std::size_t limit, const SolveOptions &options = {});

/** Minimum-cost model for which parameter values within bounds make every constraint hold, together with the
 * parameter values closest to each parameter's preferred setting.  Throws Unsat or Timeout. */
Model solve_with_params(const MinOnesProblem &p, const SolveOptions &options = {});

/// True when `chosen` with `params` satisfies every constraint of `p`.
bool satisfies(const MinOnesProblem &p, const IdSet &chosen, const ParamAssignment &params = {});

/// Problem variables: the declared ones plus every variable of the constraints, sorted.
std::vector<TupleId> problem_variables(const MinOnesProblem &p);

/** SMT-LIB2 text: Bool declarations in TupleId order, Int declarations, the b2i helper, one assert per constraint
 * and a single minimize over the b2i-sum.  No check-sat footer. */
std::string emit_smtlib(const MinOnesProblem &p, const VarNamer &name);

/// Runs an optimizing SMT solver through a shell command; the SMT file path is appended to `command`.
class ExternalSolver
{
    public:
    explicit ExternalSolver(std::string command) : command_(std::move(command)) { }

    /// Throws Unsat, SolverBackendError.
    Model solve(const MinOnesProblem &p, const VarNamer &name) const;

    private:
    std::string command_;
};

}
