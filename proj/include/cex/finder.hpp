#pragma once

#include "cex/eval.hpp"
#include "cex/solver.hpp"
#include "cex/typed_query.hpp"
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>

namespace cex {

enum class Strategy { Auto, Basic, OptSigma, AggBasic, AggParam, AggHeuristic, Fastpath, BruteForce };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

struct Counterexample
{
    IdSet ids;
    std::optional<ParamAssignment> param_setting;  ///< every parameter value the verification used
    std::optional<Tuple> witness_tuple;            ///< a row present in exactly one result on `ids`
    std::string strategy;                          ///< e.g. "fastpath(SPJUD*)"
    bool verified = false;
    std::size_t attempts = 1;                      ///< solver rounds (agg_heuristic retries)

    std::size_t size() const { return ids.size(); }
};

struct FinderOptions
{
    Strategy strategy = Strategy::Auto;
    std::size_t max_trials = 128;        ///< models per tuple for the enumerating form of basic
    bool legacy_enumerate = false;
    bool parameterize = false;           ///< free the parameters of selections over aggregates
    ParamAssignment params;              ///< the original parameter setting
    double timeout_seconds = 30.0;
    std::size_t brute_cap = 16;
    std::size_t heuristic_retries = 16;
    std::size_t union_cap = 10000;       ///< candidate witness unions for the SPJUD* fast path
    std::optional<std::string> external_solver;
};

/// Milliseconds spent per phase.
struct Timings
{
    double raw_eval = 0;
    double prov_eval = 0;
    double solve = 0;
};

struct Report
{
    bool agree = false;
    Counterexample counterexample;
    Relation q1_result, q2_result;  ///< on the counterexample
    Timings timings;
    std::string optimum_guarantee;  ///< "global", "per-tuple" or "none"
};

/// True when q1 and q2 differ on restrict(db, ids) under `params` and the subinstance meets every constraint.
bool verify_counterexample(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const IdSet &ids,
                           const ParamAssignment &params = {});

/** Each algorithm throws QueriesAgree when the results on `db` coincide, and NotEligible when the pair is outside
 * the classes it handles.  Timeout propagates from the solver. */
Counterexample basic(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const FinderOptions &options = {},
                     Timings *timings = nullptr);
Counterexample opt_sigma(const Database &db, const TypedQuery &q1, const TypedQuery &q2,
                         const FinderOptions &options = {}, Timings *timings = nullptr);
Counterexample agg_basic(const Database &db, const TypedQuery &q1, const TypedQuery &q2, bool parameterize,
                         const FinderOptions &options = {}, Timings *timings = nullptr);
/// Throws NotHeuristicEligible, RetriesExhausted.
Counterexample agg_heuristic(const Database &db, const TypedQuery &q1, const TypedQuery &q2,
                             const FinderOptions &options = {}, Timings *timings = nullptr);
/// Throws NotEligible, DnfOverflow, CapExceeded (more candidate unions than options.union_cap).
Counterexample fastpath(const Database &db, const TypedQuery &q1, const TypedQuery &q2,
                        const FinderOptions &options = {}, Timings *timings = nullptr);
/// Exhaustive search over foreign-key-closed subinstances.  Throws CapExceeded.
Counterexample brute_force(const Database &db, const TypedQuery &q1, const TypedQuery &q2,
                           const FinderOptions &options = {}, Timings *timings = nullptr);

/** A constraint problem whose models are counterexamples: for aggregate-free pairs the witnesses of the first
 * differing tuple (as opt_sigma solves it), otherwise the group constraint with the smallest model.  Declares every tuple of `db`; the
 * constraints live in `store`. */
MinOnesProblem witness_problem(const Database &db, const TypedQuery &q1, const TypedQuery &q2, ProvStore &store,
                               const FinderOptions &options = {});

/// Class of pairs the fast path accepts, as rendered in the strategy name; nullopt when ineligible.
std::optional<std::string> fastpath_class(const TypedQuery &q1, const TypedQuery &q2);
/// Parameters occurring in selections above the grouping of an aggregate query.
std::set<std::string> having_params(const QueryAst &q);

/// Dispatches on options.strategy; agreement on `db` yields a report with agree = true.
Report find(const Database &db, const TypedQuery &q1, const TypedQuery &q2, const FinderOptions &options = {});

nlohmann::json to_json(const Relation &r);
nlohmann::json to_json(const Report &r, const Database &db);

}
