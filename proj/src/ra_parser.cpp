#include "cex/ra_ast.hpp"

#include "cex/error.hpp"
#include <algorithm>
#include <cctype>

namespace cex {

std::string_view to_string(CmpOp op)
{
    switch (op) {
        case CmpOp::Eq: return "=";
        case CmpOp::Ne: return "<>";
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
    }
    return "?";
}

CmpOp mirror(CmpOp op)
{
    switch (op) {
        case CmpOp::Lt: return CmpOp::Gt;
        case CmpOp::Le: return CmpOp::Ge;
        case CmpOp::Gt: return CmpOp::Lt;
        case CmpOp::Ge: return CmpOp::Le;
        default: return op;
    }
}

CmpOp negate(CmpOp op)
{
    switch (op) {
        case CmpOp::Eq: return CmpOp::Ne;
        case CmpOp::Ne: return CmpOp::Eq;
        case CmpOp::Lt: return CmpOp::Ge;
        case CmpOp::Le: return CmpOp::Gt;
        case CmpOp::Gt: return CmpOp::Le;
        case CmpOp::Ge: return CmpOp::Lt;
    }
    return op;
}

namespace {

bool apply(std::strong_ordering c, CmpOp op)
{
    switch (op) {
        case CmpOp::Eq: return c == 0;
        case CmpOp::Ne: return c != 0;
        case CmpOp::Lt: return c < 0;
        case CmpOp::Le: return c <= 0;
        case CmpOp::Gt: return c > 0;
        case CmpOp::Ge: return c >= 0;
    }
    return false;
}

}

bool compare(const Value &a, CmpOp op, const Value &b) { return apply(a <=> b, op); }

bool compare(const Rational &a, CmpOp op, const Rational &b)
{
    auto c = a < b ? std::strong_ordering::less : b < a ? std::strong_ordering::greater : std::strong_ordering::equal;
    return apply(c, op);
}

std::string_view to_string(AggFunc f)
{
    switch (f) {
        case AggFunc::Sum: return "SUM";
        case AggFunc::Count: return "COUNT";
        case AggFunc::Avg: return "AVG";
        case AggFunc::Min: return "MIN";
        case AggFunc::Max: return "MAX";
    }
    return "?";
}

namespace {

enum class Tok { Ident, Number, String, Param, Punct, Cmp, End };

struct Token
{
    Tok kind;
    std::string text;
    std::size_t line, column;
    Value value;
    CmpOp op = CmpOp::Eq;
};

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) or c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) or c == '_'; }

class Lexer
{
    public:
    explicit Lexer(std::string_view text) : text_(text) { }

    std::vector<Token> run()
    {
        std::vector<Token> out;
        for (;;) {
            skip_space();
            std::size_t line = line_, column = column_;
            if (pos_ >= text_.size()) {
                out.push_back({Tok::End, "end of input", line, column, {}});
                return out;
            }
            char c = text_[pos_];
            Token tok{Tok::Punct, {}, line, column, {}};
            if (ident_start(c)) {
                auto start = pos_;
                while (pos_ < text_.size() and ident_char(text_[pos_])) advance();
                tok.kind = Tok::Ident;
                tok.text = std::string(text_.substr(start, pos_ - start));
            } else if (c == '@') {
                advance();
                if (pos_ >= text_.size() or not ident_start(text_[pos_]))
                    throw SyntaxError("expected parameter name after '@'", line, column);
                auto start = pos_;
                while (pos_ < text_.size() and ident_char(text_[pos_])) advance();
                tok.kind = Tok::Param;
                tok.text = std::string(text_.substr(start, pos_ - start));
            } else if (std::isdigit(static_cast<unsigned char>(c)) or
                       (c == '-' and pos_ + 1 < text_.size() and std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])))) {
                tok = number(line, column);
            } else if (c == '\'') {
                tok.kind = Tok::String;
                advance();
                std::string s;
                for (;;) {
                    if (pos_ >= text_.size()) throw SyntaxError("unterminated string literal", line, column);
                    if (text_[pos_] == '\'') {
                        if (pos_ + 1 < text_.size() and text_[pos_ + 1] == '\'') {
                            s += '\'';
                            advance();
                            advance();
                            continue;
                        }
                        advance();
                        break;
                    }
                    s += text_[pos_];
                    advance();
                }
                tok.text = s;
                tok.value = Value(s);
            } else if (text_.substr(pos_, 2) == "->") {
                advance(2);
                tok.text = "->";
            } else if (text_.substr(pos_, 3) == "\xE2\x86\x92") {
                advance(3);
                tok.text = "->";
            } else if (c == '<' or c == '>' or c == '=' or c == '!') {
                tok.kind = Tok::Cmp;
                auto two = text_.substr(pos_, 2);
                if (two == "<=") tok.op = CmpOp::Le;
                else if (two == ">=") tok.op = CmpOp::Ge;
                else if (two == "<>" or two == "!=") tok.op = CmpOp::Ne;
                else if (c == '<') tok.op = CmpOp::Lt;
                else if (c == '>') tok.op = CmpOp::Gt;
                else if (c == '=') tok.op = CmpOp::Eq;
                else throw SyntaxError("unexpected '!'", line, column);
                std::size_t width = (two == "<=" or two == ">=" or two == "<>" or two == "!=") ? 2 : 1;
                tok.text = std::string(text_.substr(pos_, width));
                advance(width);
            } else if (std::string_view("[](),;*").find(c) != std::string_view::npos) {
                tok.text = std::string(1, c);
                advance();
            } else {
                throw SyntaxError(std::string("unexpected character '") + c + "'", line, column);
            }
            out.push_back(std::move(tok));
        }
    }

    private:
    Token number(std::size_t line, std::size_t column)
    {
        auto start = pos_;
        if (text_[pos_] == '-') advance();
        auto digits = [&] {
            while (pos_ < text_.size() and std::isdigit(static_cast<unsigned char>(text_[pos_]))) advance();
        };
        digits();
        if (pos_ + 1 < text_.size() and text_[pos_] == '.' and std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
            advance();
            digits();
        } else if (pos_ + 1 < text_.size() and text_[pos_] == '/' and
                   std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
            advance();
            digits();
        }
        auto text = text_.substr(start, pos_ - start);
        auto r = parse_rational(text);
        if (not r) throw SyntaxError("malformed number '" + std::string(text) + "'", line, column);
        return Token{Tok::Number, std::string(text), line, column, Value(*r)};
    }

    void advance(std::size_t n = 1)
    {
        for (std::size_t i = 0; i < n and pos_ < text_.size(); ++i) {
            // Continuation bytes of UTF-8 sequences do not advance the column.
            if ((static_cast<unsigned char>(text_[pos_]) & 0xC0) != 0x80) ++column_;
            if (text_[pos_] == '\n') {
                ++line_;
                column_ = 1;
            }
            ++pos_;
        }
    }

    void skip_space()
    {
        for (;;) {
            while (pos_ < text_.size() and std::isspace(static_cast<unsigned char>(text_[pos_]))) advance();
            if (text_.substr(pos_, 2) == "--") {
                while (pos_ < text_.size() and text_[pos_] != '\n') advance();
                continue;
            }
            return;
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0, line_ = 1, column_ = 1;
};

const std::vector<std::string> &reserved()
{
    static const std::vector<std::string> words = {"project", "select", "rename", "join", "union", "minus",
                                                   "groupby", "and", "or", "not", "true", "false", "as"};
    return words;
}

class Parser
{
    public:
    explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) { }

    QueryAst parse()
    {
        auto q = query();
        if (peek().kind != Tok::End) fail("expected end of query");
        return q;
    }

    private:
    const Token & peek() const { return toks_[pos_]; }
    Token next() { return toks_[pos_ == toks_.size() - 1 ? pos_ : pos_++]; }

    [[noreturn]] void fail(const std::string &what) const
    {
        const auto &t = peek();
        throw SyntaxError(what + ", found '" + t.text + "'", t.line, t.column);
    }

    bool is_keyword(const char *kw) const { return peek().kind == Tok::Ident and lower(peek().text) == kw; }
    bool is_punct(const char *p) const { return peek().kind == Tok::Punct and peek().text == p; }

    void expect(const char *p)
    {
        if (not is_punct(p)) fail(std::string("expected '") + p + "'");
        next();
    }

    std::string identifier(const char *what)
    {
        if (peek().kind != Tok::Ident) fail(std::string("expected ") + what);
        auto l = lower(peek().text);
        if (std::find(reserved().begin(), reserved().end(), l) != reserved().end())
            fail(std::string("expected ") + what + " but got keyword");
        return next().text;
    }

    QueryAst query()
    {
        auto left = term();
        for (;;) {
            NodeKind kind;
            if (is_keyword("union")) kind = NodeKind::Union;
            else if (is_keyword("minus")) kind = NodeKind::Difference;
            else return left;
            next();
            QueryAst node;
            node.kind = kind;
            node.children.push_back(std::move(left));
            node.children.push_back(term());
            left = std::move(node);
        }
    }

    QueryAst term()
    {
        auto left = unary();
        while (is_keyword("join")) {
            next();
            QueryAst node;
            node.kind = NodeKind::Join;
            if (is_punct("[")) {
                next();
                node.has_predicate = true;
                node.predicate = disjunction();
                expect("]");
            }
            node.children.push_back(std::move(left));
            node.children.push_back(unary());
            left = std::move(node);
        }
        return left;
    }

    QueryAst argument(QueryAst node)
    {
        expect("(");
        node.children.push_back(query());
        expect(")");
        return node;
    }

    QueryAst unary()
    {
        if (is_punct("(")) {
            next();
            auto q = query();
            expect(")");
            return q;
        }
        QueryAst node;
        if (is_keyword("project")) {
            next();
            node.kind = NodeKind::Project;
            expect("[");
            node.attributes = name_list("]");
            expect("]");
            return argument(std::move(node));
        }
        if (is_keyword("select")) {
            next();
            node.kind = NodeKind::Select;
            node.has_predicate = true;
            expect("[");
            node.predicate = disjunction();
            expect("]");
            return argument(std::move(node));
        }
        if (is_keyword("rename")) {
            next();
            node.kind = NodeKind::Rename;
            expect("[");
            do {
                if (is_punct(",")) next();
                auto from = identifier("attribute name");
                expect("->");
                node.renames.emplace_back(from, identifier("new attribute name"));
            } while (is_punct(","));
            expect("]");
            return argument(std::move(node));
        }
        if (is_keyword("groupby")) {
            next();
            node.kind = NodeKind::GroupAgg;
            expect("[");
            node.attributes = name_list(";");
            expect(";");
            do {
                if (is_punct(",")) next();
                node.aggregates.push_back(aggregate());
            } while (is_punct(","));
            expect("]");
            return argument(std::move(node));
        }
        node.kind = NodeKind::Relation;
        node.relation = identifier("relation name or operator");
        return node;
    }

    std::vector<std::string> name_list(const char *terminator)
    {
        std::vector<std::string> out;
        if (is_punct(terminator)) return out;
        out.push_back(identifier("attribute name"));
        while (is_punct(",")) {
            next();
            out.push_back(identifier("attribute name"));
        }
        return out;
    }

    AggSpec aggregate()
    {
        if (peek().kind != Tok::Ident) fail("expected aggregate function");
        auto fn = lower(peek().text);
        AggSpec spec;
        if (fn == "sum") spec.func = AggFunc::Sum;
        else if (fn == "count") spec.func = AggFunc::Count;
        else if (fn == "avg") spec.func = AggFunc::Avg;
        else if (fn == "min") spec.func = AggFunc::Min;
        else if (fn == "max") spec.func = AggFunc::Max;
        else fail("expected SUM, COUNT, AVG, MIN or MAX");
        next();
        expect("(");
        if (is_punct("*")) {
            if (spec.func != AggFunc::Count) fail("only COUNT accepts '*'");
            next();
        } else {
            spec.attribute = identifier("attribute name");
        }
        expect(")");
        if (not is_keyword("as")) fail("expected 'as' and an output name");
        next();
        spec.output = identifier("output name");
        return spec;
    }

    Predicate disjunction()
    {
        auto first = conjunction();
        if (not is_keyword("or")) return first;
        Predicate p{Predicate::Kind::Or, CmpOp::Eq, {}, {}, {}};
        p.children.push_back(std::move(first));
        while (is_keyword("or")) {
            next();
            p.children.push_back(conjunction());
        }
        return p;
    }

    Predicate conjunction()
    {
        auto first = negation();
        if (not is_keyword("and")) return first;
        Predicate p{Predicate::Kind::And, CmpOp::Eq, {}, {}, {}};
        p.children.push_back(std::move(first));
        while (is_keyword("and")) {
            next();
            p.children.push_back(negation());
        }
        return p;
    }

    Predicate negation()
    {
        if (is_keyword("not")) {
            next();
            Predicate p{Predicate::Kind::Not, CmpOp::Eq, {}, {}, {}};
            p.children.push_back(negation());
            return p;
        }
        if (is_punct("(")) {
            next();
            auto p = disjunction();
            expect(")");
            return p;
        }
        auto lhs = operand();
        if (peek().kind != Tok::Cmp) fail("expected comparison operator");
        auto op = next().op;
        return Predicate::comparison(std::move(lhs), op, operand());
    }

    Operand operand()
    {
        const auto &t = peek();
        switch (t.kind) {
            case Tok::Number:
            case Tok::String: return Operand::constant(next().value);
            case Tok::Param: return Operand::parameter(next().text);
            case Tok::Ident:
                if (lower(t.text) == "true") {
                    next();
                    return Operand::constant(Value(true));
                }
                if (lower(t.text) == "false") {
                    next();
                    return Operand::constant(Value(false));
                }
                return Operand::attribute(identifier("attribute name"));
            default: fail("expected attribute, constant or parameter");
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

std::string quote(const std::string &s)
{
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += '\'';
        out += c;
    }
    return out + "'";
}

std::string render_operand(const Operand &o)
{
    switch (o.kind) {
        case Operand::Kind::Attribute: return o.name;
        case Operand::Kind::Parameter: return "@" + o.name;
        case Operand::Kind::Constant:
            if (o.value.is_text()) return quote(o.value.text());
            if (o.value.is_bool()) return o.value.boolean() ? "true" : "false";
            return render_rational(o.value.number());
    }
    return {};
}

std::string join_names(const std::vector<std::string> &names)
{
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ", " : "") + names[i];
    return out;
}

}

QueryAst parse_query(std::string_view text)
{
    return Parser(Lexer(text).run()).parse();
}

std::string render(const Predicate &p)
{
    switch (p.kind) {
        case Predicate::Kind::Compare:
            return render_operand(p.lhs) + " " + std::string(to_string(p.op)) + " " + render_operand(p.rhs);
        case Predicate::Kind::Not: return "not (" + render(p.children[0]) + ")";
        case Predicate::Kind::And:
        case Predicate::Kind::Or: {
            std::string sep = p.kind == Predicate::Kind::And ? " and " : " or ";
            std::string out = "(";
            for (std::size_t i = 0; i < p.children.size(); ++i) out += (i ? sep : "") + render(p.children[i]);
            return out + ")";
        }
    }
    return {};
}

std::string render(const QueryAst &q)
{
    switch (q.kind) {
        case NodeKind::Relation: return q.relation;
        case NodeKind::Select: return "select[" + render(q.predicate) + "](" + render(q.children[0]) + ")";
        case NodeKind::Project: return "project[" + join_names(q.attributes) + "](" + render(q.children[0]) + ")";
        case NodeKind::Rename: {
            std::string out = "rename[";
            for (std::size_t i = 0; i < q.renames.size(); ++i)
                out += (i ? ", " : "") + q.renames[i].first + "->" + q.renames[i].second;
            return out + "](" + render(q.children[0]) + ")";
        }
        case NodeKind::Join: {
            std::string op = q.has_predicate ? " join[" + render(q.predicate) + "] " : " join ";
            return "(" + render(q.children[0]) + op + render(q.children[1]) + ")";
        }
        case NodeKind::Union: return "(" + render(q.children[0]) + " union " + render(q.children[1]) + ")";
        case NodeKind::Difference: return "(" + render(q.children[0]) + " minus " + render(q.children[1]) + ")";
        case NodeKind::GroupAgg: {
            std::string out = "groupby[" + join_names(q.attributes) + "; ";
            for (std::size_t i = 0; i < q.aggregates.size(); ++i) {
                const auto &a = q.aggregates[i];
                out += (i ? ", " : "") + std::string(to_string(a.func)) + "(" +
                       (a.attribute.empty() ? "*" : a.attribute) + ") as " + a.output;
            }
            return out + "](" + render(q.children[0]) + ")";
        }
    }
    return {};
}

}
