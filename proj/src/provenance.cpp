#include "cex/provenance.hpp"

#include "cex/catalog.hpp"
#include "cex/error.hpp"
#include <algorithm>
#include <map>
#include <tuple>

namespace cex {

namespace {

std::size_t node_hash(ProvKind kind, TupleId var, const std::vector<const ProvNode *> &children)
{
    std::size_t h = std::size_t(kind) * 0x9e3779b97f4a7c15ULL;
    h ^= TupleIdHash{}(var) + 0x7f4a7c15 + (h << 6) + (h >> 2);
    for (auto *c : children) h ^= std::hash<const void *>{}(c) + 0x9e3779b9 + (h << 6) + (h >> 2);
    return h;
}

}

bool ProvStore::NodeEq::operator()(const ProvNode *a, const ProvNode *b) const
{
    return a->kind == b->kind and a->var == b->var and a->children == b->children;
}

ProvStore::ProvStore()
{
    false_ = intern(ProvKind::False, {}, {});
    true_ = intern(ProvKind::True, {}, {});
}

Prov ProvStore::intern(ProvKind kind, TupleId var, std::vector<const ProvNode *> children)
{
    ProvNode probe{kind, var, std::move(children), var, 0, 0};
    if (kind == ProvKind::True or kind == ProvKind::False) probe.lead = TupleId{UINT32_MAX, UINT32_MAX};
    if (not probe.children.empty()) {
        probe.lead = probe.children.front()->lead;
        for (auto *c : probe.children) probe.lead = std::min(probe.lead, c->lead);
    }
    probe.hash = node_hash(kind, var, probe.children);
    if (auto it = index_.find(&probe); it != index_.end()) return Prov(*it);
    probe.serial = std::uint32_t(nodes_.size());
    nodes_.push_back(std::move(probe));
    index_.insert(&nodes_.back());
    return Prov(&nodes_.back());
}

Prov ProvStore::var(TupleId id) { return intern(ProvKind::Var, id, {}); }

Prov ProvStore::negate(Prov e)
{
    switch (e.kind()) {
        case ProvKind::True: return false_;
        case ProvKind::False: return true_;
        case ProvKind::Not: return e.child(0);
        default: return intern(ProvKind::Not, {}, {e.node()});
    }
}

Prov ProvStore::nary(ProvKind kind, std::span<const Prov> children)
{
    const ProvKind absorbing = kind == ProvKind::And ? ProvKind::False : ProvKind::True;
    const ProvKind identity = kind == ProvKind::And ? ProvKind::True : ProvKind::False;
    std::vector<const ProvNode *> flat;
    flat.reserve(children.size());
    for (auto c : children) {
        if (c.kind() == absorbing) return Prov(c.node());
        if (c.kind() == identity) continue;
        if (c.kind() == kind) flat.insert(flat.end(), c.node()->children.begin(), c.node()->children.end());
        else flat.push_back(c.node());
    }
    std::sort(flat.begin(), flat.end(),
              [](auto *a, auto *b) { return std::tie(a->lead, a->serial) < std::tie(b->lead, b->serial); });
    flat.erase(std::unique(flat.begin(), flat.end()), flat.end());
    if (flat.empty()) return constant(kind == ProvKind::And);
    if (flat.size() == 1) return Prov(flat.front());
    return intern(kind, {}, std::move(flat));
}

Prov ProvStore::conj(std::span<const Prov> children) { return nary(ProvKind::And, children); }
Prov ProvStore::disj(std::span<const Prov> children) { return nary(ProvKind::Or, children); }

Prov ProvStore::build(ProvOp op, std::span<const Prov> children, bool constant_value, TupleId id)
{
    switch (op) {
        case ProvOp::Const:
            if (not children.empty()) throw ArityError("constant takes no children");
            return constant(constant_value);
        case ProvOp::Var:
            if (not children.empty()) throw ArityError("variable takes no children");
            return var(id);
        case ProvOp::Not:
            if (children.size() != 1) throw ArityError("not takes exactly one child");
            return negate(children[0]);
        case ProvOp::And:
            if (children.size() < 2) throw ArityError("and takes at least two children");
            return conj(children);
        case ProvOp::Or:
            if (children.size() < 2) throw ArityError("or takes at least two children");
            return disj(children);
    }
    throw ArityError("unknown operator");
}

namespace {

template <class Visit>
void walk(Prov e, Visit &&visit)
{
    std::unordered_set<const ProvNode *> seen;
    std::vector<const ProvNode *> stack{e.node()};
    while (not stack.empty()) {
        auto *n = stack.back();
        stack.pop_back();
        if (not seen.insert(n).second) continue;
        visit(n);
        for (auto *c : n->children) stack.push_back(c);
    }
}

}

std::vector<TupleId> variables(Prov e)
{
    std::vector<TupleId> out;
    walk(e, [&](const ProvNode *n) {
        if (n->kind == ProvKind::Var) out.push_back(n->var);
    });
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<TupleId> variables(std::span<const Prov> es)
{
    std::vector<TupleId> out;
    for (auto e : es) {
        auto v = variables(e);
        out.insert(out.end(), v.begin(), v.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

namespace {

bool eval_node(const ProvNode *n, const std::function<bool(TupleId)> &value,
               std::unordered_map<const ProvNode *, bool> &memo)
{
    switch (n->kind) {
        case ProvKind::False: return false;
        case ProvKind::True: return true;
        case ProvKind::Var: return value(n->var);
        default: break;
    }
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    bool result = false;
    switch (n->kind) {
        case ProvKind::Not: result = not eval_node(n->children[0], value, memo); break;
        case ProvKind::And:
            result = std::all_of(n->children.begin(), n->children.end(),
                                 [&](auto *c) { return eval_node(c, value, memo); });
            break;
        case ProvKind::Or:
            result = std::any_of(n->children.begin(), n->children.end(),
                                 [&](auto *c) { return eval_node(c, value, memo); });
            break;
        default: break;
    }
    memo.emplace(n, result);
    return result;
}

}

bool evaluate_with(Prov e, const std::function<bool(TupleId)> &value)
{
    std::unordered_map<const ProvNode *, bool> memo;
    return eval_node(e.node(), value, memo);
}

bool evaluate(Prov e, const Assignment &a)
{
    for (auto v : variables(e))
        if (not a.count(v))
            throw UnboundVariable("assignment has no value for relation " + std::to_string(v.relation) + " tuple " +
                                  std::to_string(v.ordinal));
    return evaluate_with(e, [&](TupleId id) { return a.at(id); });
}

bool evaluate_on_set(Prov e, const IdSet &present)
{
    return evaluate_with(e, [&](TupleId id) { return present.count(id) > 0; });
}

bool is_negation_free(Prov e)
{
    bool free = true;
    walk(e, [&](const ProvNode *n) {
        if (n->kind == ProvKind::Not) free = false;
    });
    return free;
}

std::size_t dag_size(Prov e)
{
    std::size_t n = 0;
    walk(e, [&](const ProvNode *) { ++n; });
    return n;
}

namespace {

bool subsumes(const Minterm &small, const Minterm &big)
{
    return std::includes(big.positive.begin(), big.positive.end(), small.positive.begin(), small.positive.end()) and
           std::includes(big.negative.begin(), big.negative.end(), small.negative.begin(), small.negative.end());
}

std::optional<Minterm> merge(const Minterm &a, const Minterm &b)
{
    Minterm m;
    std::set_union(a.positive.begin(), a.positive.end(), b.positive.begin(), b.positive.end(),
                   std::back_inserter(m.positive));
    std::set_union(a.negative.begin(), a.negative.end(), b.negative.begin(), b.negative.end(),
                   std::back_inserter(m.negative));
    std::vector<TupleId> clash;
    std::set_intersection(m.positive.begin(), m.positive.end(), m.negative.begin(), m.negative.end(),
                          std::back_inserter(clash));
    if (not clash.empty()) return std::nullopt;
    return m;
}

using Terms = std::vector<Minterm>;

class DnfBuilder
{
    public:
    explicit DnfBuilder(std::size_t cap) : cap_(cap) { }

    const Terms & build(const ProvNode *n, bool positive)
    {
        auto key = std::make_pair(n, positive);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        Terms out;
        switch (n->kind) {
            case ProvKind::True:
            case ProvKind::False:
                if ((n->kind == ProvKind::True) == positive) out.push_back({});
                break;
            case ProvKind::Var:
                if (positive) out.push_back({{n->var}, {}});
                else out.push_back({{}, {n->var}});
                break;
            case ProvKind::Not:
                out = build(n->children[0], not positive);
                break;
            case ProvKind::And:
            case ProvKind::Or: {
                bool product = (n->kind == ProvKind::And) == positive;
                if (product) {
                    out.push_back({});
                    for (auto *c : n->children) out = multiply(out, build(c, positive));
                } else {
                    for (auto *c : n->children) {
                        const auto &t = build(c, positive);
                        out.insert(out.end(), t.begin(), t.end());
                        if (out.size() > cap_) throw DnfOverflow(cap_);
                    }
                    absorb(out);
                }
                break;
            }
        }
        return memo_.emplace(key, std::move(out)).first->second;
    }

    private:
    Terms multiply(const Terms &a, const Terms &b)
    {
        Terms out;
        if (a.size() * b.size() > cap_) throw DnfOverflow(cap_);
        out.reserve(a.size() * b.size());
        for (const auto &x : a)
            for (const auto &y : b)
                if (auto m = merge(x, y)) out.push_back(std::move(*m));
        absorb(out);
        return out;
    }

    std::size_t cap_;
    std::map<std::pair<const ProvNode *, bool>, Terms> memo_;
};

}

void absorb(std::vector<Minterm> &minterms)
{
    std::sort(minterms.begin(), minterms.end(), [](const Minterm &a, const Minterm &b) {
        auto sa = a.positive.size() + a.negative.size(), sb = b.positive.size() + b.negative.size();
        return sa != sb ? sa < sb : a < b;
    });
    minterms.erase(std::unique(minterms.begin(), minterms.end()), minterms.end());
    std::vector<Minterm> kept;
    for (auto &m : minterms) {
        bool subsumed = std::any_of(kept.begin(), kept.end(), [&](const Minterm &k) { return subsumes(k, m); });
        if (not subsumed) kept.push_back(std::move(m));
    }
    std::sort(kept.begin(), kept.end());
    minterms = std::move(kept);
}

Dnf to_dnf(Prov e, std::size_t cap)
{
    DnfBuilder builder(cap);
    Dnf d{builder.build(e.node(), true)};
    return d;
}

bool evaluate(const Dnf &d, const std::function<bool(TupleId)> &value)
{
    return std::any_of(d.minterms.begin(), d.minterms.end(), [&](const Minterm &m) {
        return std::all_of(m.positive.begin(), m.positive.end(), value) and
               std::none_of(m.negative.begin(), m.negative.end(), value);
    });
}

IdSet min_minterm(const Dnf &d)
{
    if (d.minterms.empty()) throw EmptyDnf("DNF has no minterms");
    const Minterm *best = &d.minterms.front();
    for (const auto &m : d.minterms) {
        if (m.positive.size() < best->positive.size() or
            (m.positive.size() == best->positive.size() and m.positive < best->positive))
            best = &m;
    }
    return IdSet(best->positive.begin(), best->positive.end());
}

namespace {

void infix(const ProvNode *n, const VarNamer &name, std::string &out, bool in_and)
{
    switch (n->kind) {
        case ProvKind::True: out += "1"; return;
        case ProvKind::False: out += "0"; return;
        case ProvKind::Var: out += name(n->var); return;
        case ProvKind::Not: {
            auto *c = n->children[0];
            bool atomic = c->kind == ProvKind::Var;
            out += atomic ? "!" : "!(";
            infix(c, name, out, false);
            if (not atomic) out += ")";
            return;
        }
        case ProvKind::And:
            for (std::size_t i = 0; i < n->children.size(); ++i) {
                if (i) out += " ";
                infix(n->children[i], name, out, true);
            }
            return;
        case ProvKind::Or:
            if (in_and) out += "(";
            for (std::size_t i = 0; i < n->children.size(); ++i) {
                if (i) out += " + ";
                infix(n->children[i], name, out, false);
            }
            if (in_and) out += ")";
            return;
    }
}

void smt(const ProvNode *n, const VarNamer &name, std::string &out)
{
    switch (n->kind) {
        case ProvKind::True: out += "true"; return;
        case ProvKind::False: out += "false"; return;
        case ProvKind::Var: out += name(n->var); return;
        case ProvKind::Not:
            out += "(not ";
            smt(n->children[0], name, out);
            out += ")";
            return;
        case ProvKind::And:
        case ProvKind::Or:
            out += n->kind == ProvKind::And ? "(and" : "(or";
            for (auto *c : n->children) {
                out += " ";
                smt(c, name, out);
            }
            out += ")";
            return;
    }
}

}

std::string render_infix(Prov e, const VarNamer &name)
{
    std::string out;
    infix(e.node(), name, out, false);
    return out;
}

std::string render_smt(Prov e, const VarNamer &name)
{
    std::string out;
    smt(e.node(), name, out);
    return out;
}

std::string render_dnf(const Dnf &d, const VarNamer &name)
{
    if (d.minterms.empty()) return "0";
    std::string out;
    for (std::size_t i = 0; i < d.minterms.size(); ++i) {
        if (i) out += " + ";
        const auto &m = d.minterms[i];
        if (m.positive.empty() and m.negative.empty()) out += "1";
        bool first = true;
        for (auto v : m.positive) {
            out += (first ? "" : " ") + name(v);
            first = false;
        }
        for (auto v : m.negative) {
            out += (first ? "!" : " !") + name(v);
            first = false;
        }
    }
    return out;
}

namespace {

Prov implication_for(const Database &db, ProvStore &store, TupleId child, const ForeignKeyLink &link)
{
    if (link.parents.empty())
        throw DanglingReference(db.render_id(child) + " references a missing " +
                                db.schema(child.relation).foreign_keys[link.fk].ref_relation + " tuple");
    std::vector<Prov> parts;
    for (auto p : link.parents) parts.push_back(store.var(p));
    parts.push_back(store.negate(store.var(child)));
    return store.disj(parts);
}

}

std::vector<Prov> fk_implications(const Database &db, ProvStore &store)
{
    std::vector<Prov> out;
    for (auto id : db.ids())
        for (const auto &link : db.fk_links(id)) out.push_back(implication_for(db, store, id, link));
    return out;
}

std::vector<Prov> fk_implications_for(const Database &db, ProvStore &store, IdSet &ids)
{
    std::vector<Prov> out;
    std::vector<TupleId> work(ids.begin(), ids.end());
    IdSet done;
    while (not work.empty()) {
        auto id = work.back();
        work.pop_back();
        if (not done.insert(id).second) continue;
        for (const auto &link : db.fk_links(id)) {
            out.push_back(implication_for(db, store, id, link));
            for (auto p : link.parents) {
                ids.insert(p);
                work.push_back(p);
            }
        }
    }
    std::sort(out.begin(), out.end(), [](Prov a, Prov b) { return a.node()->serial < b.node()->serial; });
    return out;
}

}
