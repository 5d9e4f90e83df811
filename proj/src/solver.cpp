#include "cex/solver.hpp"

#include "cex/error.hpp"
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <regex>
#include <set>
#include <unordered_map>
#include <unistd.h>

namespace cex {

std::vector<TupleId> problem_variables(const MinOnesProblem &p)
{
    std::vector<Prov> all = p.hard_bool;
    std::vector<TupleId> vars = variables(all);
    if (p.agg_formula) {
        auto more = variables(*p.agg_formula);
        vars.insert(vars.end(), more.begin(), more.end());
    }
    vars.insert(vars.end(), p.boolean_vars.begin(), p.boolean_vars.end());
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    return vars;
}

namespace {

constexpr std::uint8_t F = 0, T = 1, U = 2;

enum class Op : std::uint8_t { False, True, Var, Not, And, Or, Xor, Atom };

struct Gate
{
    Op op;
    std::uint32_t arg = 0;     ///< variable or atom index
    std::uint32_t first = 0;   ///< into Circuit::edges
    std::uint32_t count = 0;
};

struct Side
{
    AggOperand::Kind kind = AggOperand::Kind::Constant;
    AggFunc func = AggFunc::Count;
    std::vector<std::pair<std::uint32_t, Rational>> terms;  ///< (guard gate, value)
    Rational constant;
    std::size_t param = 0;
};

struct Atom
{
    Side lhs, rhs;
    CmpOp op;
};

struct Value2
{
    Rational num, den{1};
};

/// Boolean circuit in topological order; the last gate is the conjunction of all constraints.
class Circuit
{
    public:
    Circuit(const MinOnesProblem &p, const std::vector<TupleId> &vars) : params_(p.int_params)
    {
        for (std::size_t i = 0; i < vars.size(); ++i) var_index_.emplace(vars[i], i);
        std::vector<std::uint32_t> roots;
        for (auto e : p.hard_bool) roots.push_back(compile(e));
        if (p.agg_formula) roots.push_back(compile(*p.agg_formula));
        root_ = add(Op::And, 0, roots);
    }

    std::size_t root() const { return root_; }
    std::size_t param_count() const { return params_.size(); }
    const std::vector<IntParam> & params() const { return params_; }

    /// Three-valued pass; `params` null leaves parameter atoms unknown.
    void run(const std::vector<std::uint8_t> &assign, const std::int64_t *params, std::vector<std::uint8_t> &val) const
    {
        val.resize(gates_.size());
        for (std::size_t g = 0; g < gates_.size(); ++g) {
            const auto &gate = gates_[g];
            const auto *c = edges_.data() + gate.first;
            switch (gate.op) {
                case Op::False: val[g] = F; break;
                case Op::True: val[g] = T; break;
                case Op::Var: val[g] = assign[gate.arg]; break;
                case Op::Not: val[g] = val[c[0]] == U ? U : std::uint8_t(1 - val[c[0]]); break;
                case Op::And: {
                    std::uint8_t r = T;
                    for (std::uint32_t i = 0; i < gate.count and r != F; ++i) {
                        if (val[c[i]] == F) r = F;
                        else if (val[c[i]] == U) r = U;
                    }
                    val[g] = r;
                    break;
                }
                case Op::Or: {
                    std::uint8_t r = F;
                    for (std::uint32_t i = 0; i < gate.count and r != T; ++i) {
                        if (val[c[i]] == T) r = T;
                        else if (val[c[i]] == U) r = U;
                    }
                    val[g] = r;
                    break;
                }
                case Op::Xor:
                    val[g] = val[c[0]] == U or val[c[1]] == U ? U : std::uint8_t(val[c[0]] != val[c[1]]);
                    break;
                case Op::Atom: val[g] = atom_value(atoms_[gate.arg], val, params); break;
            }
        }
    }

    /// Candidate values per parameter under a total assignment whose gate values are in `val`.
    std::vector<std::vector<std::int64_t>> candidates(const std::vector<std::uint8_t> &val) const
    {
        std::vector<std::set<std::int64_t>> sets(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i)
            sets[i] = {params_[i].lo, params_[i].hi, params_[i].preferred};
        for (const auto &a : atoms_) {
            const bool lp = a.lhs.kind == AggOperand::Kind::Parameter;
            const bool rp = a.rhs.kind == AggOperand::Kind::Parameter;
            if (lp == rp) continue;
            auto v = side_value(lp ? a.rhs : a.lhs, val, nullptr);
            if (not v or not *v) continue;
            Rational r = (*v)->num / (*v)->den;
            auto fl = r.numerator() / r.denominator();
            if (r.numerator() < 0 and r.numerator() % r.denominator() != 0) --fl;
            auto ce = fl + (Rational(fl) == r ? 0 : 1);
            for (auto c : {fl - 1, fl, ce, ce + 1}) sets[lp ? a.lhs.param : a.rhs.param].insert(c);
        }
        std::vector<std::vector<std::int64_t>> out(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto &p = params_[i];
            for (auto c : sets[i])
                if (c >= p.lo and c <= p.hi) out[i].push_back(c);
            std::stable_sort(out[i].begin(), out[i].end(), [&](std::int64_t a, std::int64_t b) {
                auto da = a > p.preferred ? a - p.preferred : p.preferred - a;
                auto db = b > p.preferred ? b - p.preferred : p.preferred - b;
                return da < db;
            });
        }
        return out;
    }

    private:
    std::uint32_t add(Op op, std::uint32_t arg, const std::vector<std::uint32_t> &children = {})
    {
        Gate g{op, arg, std::uint32_t(edges_.size()), std::uint32_t(children.size())};
        edges_.insert(edges_.end(), children.begin(), children.end());
        gates_.push_back(g);
        return std::uint32_t(gates_.size() - 1);
    }

    std::uint32_t compile(Prov e)
    {
        auto it = memo_.find(e.node());
        if (it != memo_.end()) return it->second;
        std::uint32_t g = 0;
        switch (e.kind()) {
            case ProvKind::False: g = add(Op::False, 0); break;
            case ProvKind::True: g = add(Op::True, 0); break;
            case ProvKind::Var: g = add(Op::Var, std::uint32_t(var_index_.at(e.var()))); break;
            case ProvKind::Not: g = add(Op::Not, 0, {compile(e.child(0))}); break;
            case ProvKind::And:
            case ProvKind::Or: {
                std::vector<std::uint32_t> cs;
                for (std::size_t i = 0; i < e.children().size(); ++i) cs.push_back(compile(e.child(i)));
                g = add(e.kind() == ProvKind::And ? Op::And : Op::Or, 0, cs);
                break;
            }
        }
        memo_.emplace(e.node(), g);
        return g;
    }

    Side compile(const AggOperand &o)
    {
        Side s;
        s.kind = o.kind;
        if (o.kind == AggOperand::Kind::Expr) {
            s.func = o.expr.func;
            for (const auto &t : o.expr.terms) s.terms.emplace_back(compile(t.guard), t.value);
        } else if (o.kind == AggOperand::Kind::Constant) {
            s.constant = o.constant;
        } else {
            auto it = std::find_if(params_.begin(), params_.end(), [&](const IntParam &p) { return p.name == o.param; });
            if (it == params_.end()) throw UnknownParam("parameter @" + o.param + " is not declared in the problem");
            s.param = std::size_t(it - params_.begin());
        }
        return s;
    }

    std::uint32_t compile(const AggFormula &f)
    {
        switch (f.kind) {
            case AggFormula::Kind::Const: return add(f.value ? Op::True : Op::False, 0);
            case AggFormula::Kind::Prov: return compile(f.prov);
            case AggFormula::Kind::Atom: {
                Atom a{compile(f.atom.lhs), compile(f.atom.rhs), f.atom.op};
                atoms_.push_back(std::move(a));
                return add(Op::Atom, std::uint32_t(atoms_.size() - 1));
            }
            default: {
                std::vector<std::uint32_t> cs;
                for (const auto &c : f.children) cs.push_back(compile(c));
                Op op = f.kind == AggFormula::Kind::Not ? Op::Not
                        : f.kind == AggFormula::Kind::And ? Op::And
                        : f.kind == AggFormula::Kind::Or ? Op::Or
                                                          : Op::Xor;
                return add(op, 0, cs);
            }
        }
    }

    /// nullopt: unknown; inner nullopt: undefined (empty AVG/MIN/MAX).
    std::optional<std::optional<Value2>> side_value(const Side &s, const std::vector<std::uint8_t> &val,
                                                   const std::int64_t *params) const
    {
        switch (s.kind) {
            case AggOperand::Kind::Constant: return std::optional<Value2>(Value2{s.constant});
            case AggOperand::Kind::Parameter:
                if (not params) return std::nullopt;
                return std::optional<Value2>(Value2{Rational(params[s.param])});
            case AggOperand::Kind::Expr: break;
        }
        Rational sum(0), best(0);
        std::int64_t count = 0;
        for (const auto &[g, v] : s.terms) {
            if (val[g] == U) return std::nullopt;
            if (val[g] == F) continue;
            if (count == 0) best = v;
            else if (s.func == AggFunc::Min) best = std::min(best, v);
            else if (s.func == AggFunc::Max) best = std::max(best, v);
            sum += v;
            ++count;
        }
        switch (s.func) {
            case AggFunc::Count: return std::optional<Value2>(Value2{Rational(count)});
            case AggFunc::Sum: return std::optional<Value2>(Value2{sum});
            case AggFunc::Avg:
                if (count == 0) return std::optional<Value2>();
                return std::optional<Value2>(Value2{sum, Rational(count)});
            default:
                if (count == 0) return std::optional<Value2>();
                return std::optional<Value2>(Value2{best});
        }
    }

    std::uint8_t atom_value(const Atom &a, const std::vector<std::uint8_t> &val, const std::int64_t *params) const
    {
        auto l = side_value(a.lhs, val, params);
        auto r = side_value(a.rhs, val, params);
        // An undefined side makes the atom false whatever the other side is.
        if ((l and not *l) or (r and not *r)) return F;
        if (not l or not r) return U;
        return compare((*l)->num * (*r)->den, a.op, (*r)->num * (*l)->den) ? T : F;
    }

    std::vector<IntParam> params_;
    std::unordered_map<TupleId, std::size_t, TupleIdHash> var_index_;
    std::unordered_map<const ProvNode *, std::uint32_t> memo_;
    std::vector<Gate> gates_;
    std::vector<std::uint32_t> edges_;
    std::vector<Atom> atoms_;
    std::uint32_t root_ = 0;
};

class Search
{
    public:
    Search(const MinOnesProblem &p, const SolveOptions &options)
        : vars_(problem_variables(p)), circuit_(p, vars_), budget_(options.timeout_seconds)
        , deadline_(std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                              std::chrono::duration<double>(options.timeout_seconds)))
        , assign_(vars_.size(), U)
    {
        for (const auto &p : circuit_.params())
            if (p.lo > p.hi) throw Unsat();
    }

    std::optional<Model> minimum()
    {
        best_cost_ = vars_.size() + 1;
        descend_min(0, 0, false);
        if (not best_) return std::nullopt;
        if (best_cost_ > 0) {
            // Phase two: the lexicographically smallest set of the optimal size.
            std::fill(assign_.begin(), assign_.end(), U);
            best_.reset();
            descend_lex(0, 0);
        }
        return best_;
    }

    std::optional<Model> first()
    {
        std::fill(assign_.begin(), assign_.end(), U);
        best_.reset();
        descend_first(0);
        return best_;
    }

    void block(const Model &m)
    {
        std::vector<bool> key(vars_.size());
        for (std::size_t i = 0; i < vars_.size(); ++i) key[i] = m.chosen.contains(vars_[i]);
        blocked_.insert(std::move(key));
    }

    /// Parameter values making the circuit true under the current total assignment.
    std::optional<ParamAssignment> check_total()
    {
        if (not blocked_.empty()) {
            std::vector<bool> key(vars_.size());
            for (std::size_t i = 0; i < vars_.size(); ++i) key[i] = assign_[i] == T;
            if (blocked_.contains(key)) return std::nullopt;
        }
        circuit_.run(assign_, nullptr, val_);
        auto r = val_[circuit_.root()];
        if (r == F) return std::nullopt;
        const auto &ps = circuit_.params();
        if (r == T) {
            ParamAssignment out;
            for (const auto &p : ps) out[p.name] = std::clamp(p.preferred, p.lo, p.hi);
            return out;
        }
        auto cands = circuit_.candidates(val_);
        for (const auto &c : cands)
            if (c.empty()) return std::nullopt;
        std::vector<std::size_t> pos(ps.size(), 0);
        std::vector<std::int64_t> values(ps.size());
        std::vector<std::uint8_t> scratch;
        while (true) {
            for (std::size_t i = 0; i < ps.size(); ++i) values[i] = cands[i][pos[i]];
            circuit_.run(assign_, values.data(), scratch);
            if (scratch[circuit_.root()] == T) {
                ParamAssignment out;
                for (std::size_t i = 0; i < ps.size(); ++i) out[ps[i].name] = values[i];
                return out;
            }
            std::size_t i = ps.size();
            while (i > 0) {
                --i;
                if (++pos[i] < cands[i].size()) break;
                pos[i] = 0;
                if (i == 0) return std::nullopt;
            }
            if (ps.empty()) return std::nullopt;
        }
    }

    const std::vector<TupleId> & vars() const { return vars_; }
    std::vector<std::uint8_t> & assignment() { return assign_; }

    private:
    void tick()
    {
        if ((++nodes_ & 255) == 0 and std::chrono::steady_clock::now() > deadline_) throw Timeout(budget_);
    }

    /// Kleene check of the partial assignment: false when no completion can satisfy the circuit.
    bool possible()
    {
        circuit_.run(assign_, nullptr, val_);
        return val_[circuit_.root()] != F;
    }

    std::optional<ParamAssignment> check_rest_false(std::size_t from)
    {
        for (std::size_t i = from; i < assign_.size(); ++i) assign_[i] = F;
        auto r = check_total();
        for (std::size_t i = from; i < assign_.size(); ++i) assign_[i] = U;
        return r;
    }

    void record(std::size_t cost, ParamAssignment params)
    {
        Model m;
        for (std::size_t i = 0; i < vars_.size(); ++i)
            if (assign_[i] == T) m.chosen.insert(vars_[i]);
        m.cost = cost;
        m.params = std::move(params);
        best_ = std::move(m);
        best_cost_ = cost;
    }

    void descend_min(std::size_t i, std::size_t cur, bool rest_false_known)
    {
        tick();
        if (not rest_false_known) {
            if (auto params = check_rest_false(i)) {
                for (std::size_t j = i; j < assign_.size(); ++j) assign_[j] = F;
                record(cur, std::move(*params));
                for (std::size_t j = i; j < assign_.size(); ++j) assign_[j] = U;
                return;
            }
        }
        if (i == vars_.size() or cur + 1 >= best_cost_ or not possible()) return;
        assign_[i] = F;
        descend_min(i + 1, cur, true);
        assign_[i] = T;
        descend_min(i + 1, cur + 1, false);
        assign_[i] = U;
    }

    bool descend_lex(std::size_t i, std::size_t cur)
    {
        tick();
        if (cur == best_cost_) {
            auto params = check_rest_false(i);
            if (not params) return false;
            for (std::size_t j = i; j < assign_.size(); ++j) assign_[j] = F;
            record(cur, std::move(*params));
            return true;
        }
        if (i == vars_.size() or best_cost_ - cur > vars_.size() - i or not possible()) return false;
        assign_[i] = T;
        if (descend_lex(i + 1, cur + 1)) return true;
        assign_[i] = F;
        if (descend_lex(i + 1, cur)) return true;
        assign_[i] = U;
        return false;
    }

    bool descend_first(std::size_t i)
    {
        tick();
        if (i == vars_.size()) {
            auto params = check_total();
            if (not params) return false;
            record(std::size_t(std::count(assign_.begin(), assign_.end(), T)), std::move(*params));
            return true;
        }
        if (not possible()) return false;
        for (auto v : {F, T}) {
            assign_[i] = v;
            if (descend_first(i + 1)) return true;
        }
        assign_[i] = U;
        return false;
    }

    std::vector<TupleId> vars_;
    Circuit circuit_;
    double budget_;
    std::chrono::steady_clock::time_point deadline_;
    std::vector<std::uint8_t> assign_, val_;
    std::set<std::vector<bool>> blocked_;
    std::optional<Model> best_;
    std::size_t best_cost_ = 0;
    std::uint64_t nodes_ = 0;
};

}

Model solve_min_ones(const MinOnesProblem &p, const SolveOptions &options)
{
    Search s(p, options);
    auto m = s.minimum();
    if (not m) throw Unsat();
    return *m;
}

Model solve_with_params(const MinOnesProblem &p, const SolveOptions &options) { return solve_min_ones(p, options); }

std::vector<Model> enumerate_models(const MinOnesProblem &p, std::size_t limit, const SolveOptions &options)
{
    std::vector<Model> out;
    Search s(p, options);
    while (out.size() < limit) {
        auto m = s.first();
        if (not m) break;
        s.block(*m);
        out.push_back(std::move(*m));
    }
    return out;
}

bool satisfies(const MinOnesProblem &p, const IdSet &chosen, const ParamAssignment &params)
{
    auto present = [&](TupleId id) { return chosen.contains(id); };
    for (auto e : p.hard_bool)
        if (not evaluate_with(e, present)) return false;
    for (const auto &ip : p.int_params) {
        auto it = params.find(ip.name);
        if (it == params.end() or it->second < ip.lo or it->second > ip.hi) return false;
    }
    return not p.agg_formula or evaluate(*p.agg_formula, present, params);
}

std::string emit_smtlib(const MinOnesProblem &p, const VarNamer &name)
{
    auto vars = problem_variables(p);
    std::string out;
    for (auto v : vars) out += "(declare-const " + name(v) + " Bool)\n";
    for (const auto &ip : p.int_params) out += "(declare-const " + ip.name + " Int)\n";
    out += "(define-fun b2i ((x Bool)) Int (ite x 1 0))\n";
    for (auto e : p.hard_bool) out += "(assert " + render_smt(e, name) + ")\n";
    if (p.agg_formula) out += "(assert " + render_smt(*p.agg_formula, name) + ")\n";
    auto bound = [](std::int64_t v) { return v < 0 ? "(- " + std::to_string(-v) + ")" : std::to_string(v); };
    for (const auto &ip : p.int_params)
        out += "(assert (and (<= " + bound(ip.lo) + " " + ip.name + ") (<= " + ip.name + " " + bound(ip.hi) + ")))\n";
    if (vars.empty()) {
        out += "(minimize 0)\n";
    } else if (vars.size() == 1) {
        out += "(minimize (b2i " + name(vars.front()) + "))\n";
    } else {
        out += "(minimize (+";
        for (auto v : vars) out += " (b2i " + name(v) + ")";
        out += "))\n";
    }
    return out;
}

Model ExternalSolver::solve(const MinOnesProblem &p, const VarNamer &name) const
{
    namespace fs = std::filesystem;
    static std::atomic<unsigned> counter{0};
    auto path = fs::temp_directory_path() /
                ("cex-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".smt2");
    {
        std::ofstream f(path);
        f << emit_smtlib(p, name) << "(check-sat)\n(get-objectives)\n(get-model)\n";
        if (not f) throw SolverBackendError("cannot write " + path.string());
    }
    std::string output;
    {
        std::unique_ptr<FILE, int (*)(FILE *)> pipe(::popen((command_ + " '" + path.string() + "' 2>&1").c_str(), "r"),
                                                    ::pclose);
        if (not pipe) throw SolverBackendError("cannot start solver command: " + command_);
        char buffer[4096];
        std::size_t n;
        while ((n = std::fread(buffer, 1, sizeof buffer, pipe.get())) > 0) output.append(buffer, n);
    }
    fs::remove(path);

    auto first = output.substr(0, output.find_first_of("\r\n"));
    if (first == "unsat") throw Unsat();
    if (first != "sat") throw SolverBackendError("solver answered: " + first);

    std::map<std::string, TupleId> by_name;
    for (auto v : problem_variables(p)) by_name.emplace(name(v), v);
    Model m;
    static const std::regex entry(R"(\(define-fun\s+([^\s()]+)\s+\(\)\s+(Bool|Int)\s+(true|false|\d+|\(-\s*\d+\))\s*\))");
    for (std::sregex_iterator it(output.begin(), output.end(), entry), end; it != end; ++it) {
        auto sym = (*it)[1].str();
        auto value = (*it)[3].str();
        if ((*it)[2] == "Bool") {
            auto v = by_name.find(sym);
            if (v != by_name.end() and value == "true") m.chosen.insert(v->second);
        } else {
            bool negative = value.front() == '(';
            auto digits = value.substr(value.find_first_of("0123456789"));
            auto n = std::stoll(digits);
            m.params[sym] = negative ? -n : n;
        }
    }
    m.cost = m.chosen.size();
    for (const auto &ip : p.int_params)
        if (not m.params.contains(ip.name)) m.params[ip.name] = std::clamp(ip.preferred, ip.lo, ip.hi);
    if (not satisfies(p, m.chosen, m.params)) throw SolverBackendError("solver model violates the constraints");
    return m;
}

}
