#pragma once

#include "cex/tuple_id.hpp"
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace cex {

class Database;

enum class ProvKind : std::uint8_t { False, True, Var, Not, And, Or };

struct ProvNode
{
    ProvKind kind;
    TupleId var;                              ///< set for Var
    std::vector<const ProvNode *> children;   ///< sorted by (lead, serial) for And/Or
    TupleId lead;                             ///< smallest variable below this node
    std::size_t hash;
    std::uint32_t serial;                     ///< creation order inside the owning store
};

/** Handle to a hash-consed Boolean provenance expression.  Equality is node identity, which coincides with
 * structural equality because the owning ProvStore never creates two identical nodes. */
class Prov
{
    public:
    Prov() = default;
    explicit Prov(const ProvNode *node) : node_(node) { }

    ProvKind kind() const { return node_->kind; }
    TupleId var() const { return node_->var; }
    std::span<const ProvNode * const> children() const { return node_->children; }
    Prov child(std::size_t i) const { return Prov(node_->children[i]); }
    const ProvNode * node() const { return node_; }
    bool valid() const { return node_ != nullptr; }

    bool is_true() const { return node_->kind == ProvKind::True; }
    bool is_false() const { return node_->kind == ProvKind::False; }

    friend bool operator==(Prov a, Prov b) { return a.node_ == b.node_; }

    private:
    const ProvNode *node_ = nullptr;
};

struct ProvHash
{
    std::size_t operator()(Prov p) const { return std::hash<const void *>{}(p.node()); }
};

enum class ProvOp { Const, Var, Not, And, Or };

/** Interning arena for provenance expressions.
 *
 * Smart constructors fold constants, flatten nested And/Or, drop identity elements, remove duplicate children and
 * cancel double negation; nothing more.  Absorption is left to DNF conversion.  A store is not synchronized: use one
 * per analysis run and share the finished expressions read-only. */
class ProvStore
{
    public:
    ProvStore();
    ProvStore(const ProvStore&) = delete;
    ProvStore & operator=(const ProvStore&) = delete;

    Prov constant(bool value) const { return value ? true_ : false_; }
    Prov var(TupleId id);
    Prov negate(Prov e);
    Prov conj(std::span<const Prov> children);
    Prov disj(std::span<const Prov> children);
    Prov conj(Prov a, Prov b) { Prov c[] = {a, b}; return conj(c); }
    Prov disj(Prov a, Prov b) { Prov c[] = {a, b}; return disj(c); }
    /// a ⇒ b, encoded as b ∨ ¬a.
    Prov implies(Prov a, Prov b) { return disj(b, negate(a)); }

    /// Generic constructor; throws ArityError when the child count does not fit `op`.
    Prov build(ProvOp op, std::span<const Prov> children, bool constant_value = false, TupleId var = {});

    std::size_t size() const { return nodes_.size(); }

    private:
    Prov intern(ProvKind kind, TupleId var, std::vector<const ProvNode *> children);
    Prov nary(ProvKind kind, std::span<const Prov> children);

    struct NodeHash { std::size_t operator()(const ProvNode *n) const { return n->hash; } };
    struct NodeEq { bool operator()(const ProvNode *a, const ProvNode *b) const; };

    std::deque<ProvNode> nodes_;
    std::unordered_set<const ProvNode *, NodeHash, NodeEq> index_;
    Prov true_, false_;
};

using Assignment = std::unordered_map<TupleId, bool, TupleIdHash>;

/// Variables of `e` in TupleId order.
std::vector<TupleId> variables(Prov e);
/// Variables of all expressions, deduplicated and sorted.
std::vector<TupleId> variables(std::span<const Prov> es);

/// Standard Boolean semantics; throws UnboundVariable when `a` misses a variable of `e`.
bool evaluate(Prov e, const Assignment &a);
/// Evaluation against an indicator function (total by construction).
bool evaluate_with(Prov e, const std::function<bool(TupleId)> &value);
bool evaluate_on_set(Prov e, const IdSet &present);

bool is_negation_free(Prov e);
std::size_t dag_size(Prov e);

struct Minterm
{
    std::vector<TupleId> positive; ///< sorted
    std::vector<TupleId> negative; ///< sorted

    friend bool operator==(const Minterm&, const Minterm&) = default;
    friend auto operator<=>(const Minterm&, const Minterm&) = default;
};

/// Disjunctive normal form with contradictory and absorbed minterms removed; minterms sorted.
struct Dnf
{
    std::vector<Minterm> minterms;

    bool is_false() const { return minterms.empty(); }
    friend bool operator==(const Dnf&, const Dnf&) = default;
};

inline constexpr std::size_t default_dnf_cap = 100000;

/// Throws DnfOverflow when an intermediate expansion holds more than `cap` minterms.
Dnf to_dnf(Prov e, std::size_t cap = default_dnf_cap);
bool evaluate(const Dnf &d, const std::function<bool(TupleId)> &value);
/// Drops minterms subsumed by another minterm and sorts the rest.
void absorb(std::vector<Minterm> &minterms);

/** Positive literals of the minterm with the fewest positive literals; ties go to the lexicographically smallest
 * sorted id sequence.  Throws EmptyDnf. */
IdSet min_minterm(const Dnf &d);

using VarNamer = std::function<std::string(TupleId)>;

/// Infix rendering with `+` for disjunction and juxtaposition for conjunction: "t1 (t4 + t5)".
std::string render_infix(Prov e, const VarNamer &name);
/// SMT-LIB prefix rendering: "(and t1 (or t4 t5))".
std::string render_smt(Prov e, const VarNamer &name);
std::string render_dnf(const Dnf &d, const VarNamer &name);

/** One implication per (referencing tuple, foreign key): child ⇒ parent, encoded as (parent ∨ ¬child).
 * Ordered by child TupleId, then foreign key declaration order.  Throws DanglingReference. */
std::vector<Prov> fk_implications(const Database &db, ProvStore &store);
/// Implications for the foreign-key ancestors of `ids` (transitively); returns them and extends `ids` with the
/// ancestors that appear.
std::vector<Prov> fk_implications_for(const Database &db, ProvStore &store, IdSet &ids);

}
