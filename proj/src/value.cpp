#include "cex/value.hpp"

#include "cex/error.hpp"
#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace cex {

std::string_view to_string(AttributeType t)
{
    switch (t) {
        case AttributeType::Integer: return "integer";
        case AttributeType::Rational: return "rational";
        case AttributeType::Text: return "text";
        case AttributeType::Boolean: return "boolean";
    }
    return "?";
}

std::optional<AttributeType> parse_attribute_type(std::string_view name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "integer" or lower == "int") return AttributeType::Integer;
    if (lower == "rational" or lower == "number" or lower == "decimal") return AttributeType::Rational;
    if (lower == "text" or lower == "string") return AttributeType::Text;
    if (lower == "boolean" or lower == "bool") return AttributeType::Boolean;
    return std::nullopt;
}

std::strong_ordering operator<=>(const Value &a, const Value &b)
{
    if (a.v_.index() != b.v_.index()) return a.v_.index() <=> b.v_.index();
    if (a.is_number()) {
        if (a.number() < b.number()) return std::strong_ordering::less;
        if (b.number() < a.number()) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }
    if (a.is_text()) return a.text() <=> b.text();
    return a.boolean() <=> b.boolean();
}

std::size_t Value::hash() const
{
    if (is_number()) {
        auto h1 = std::hash<std::int64_t>{}(number().numerator());
        auto h2 = std::hash<std::int64_t>{}(number().denominator());
        return h1 ^ (h2 * 0x9e3779b97f4a7c15ULL);
    }
    if (is_text()) return std::hash<std::string>{}(text()) ^ 0x51ed27;
    return boolean() ? 0x1234567 : 0x7654321;
}

std::string render_rational(const Rational &r)
{
    if (r.denominator() == 1) return std::to_string(r.numerator());
    // Terminating decimals (denominator of the form 2^a 5^b) print exactly.
    std::int64_t d = r.denominator();
    int twos = 0, fives = 0;
    while (d % 2 == 0) { d /= 2; ++twos; }
    while (d % 5 == 0) { d /= 5; ++fives; }
    if (d != 1) return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
    int digits = std::max(twos, fives);
    std::int64_t scale = 1;
    for (int i = 0; i < digits; ++i) scale *= 10;
    std::int64_t scaled = r.numerator() * (scale / r.denominator());
    bool negative = scaled < 0;
    std::string abs = std::to_string(negative ? -scaled : scaled);
    if (abs.size() <= std::size_t(digits)) abs.insert(0, std::size_t(digits) + 1 - abs.size(), '0');
    abs.insert(abs.size() - std::size_t(digits), ".");
    return (negative ? "-" : "") + abs;
}

std::string Value::render() const
{
    if (is_number()) return render_rational(number());
    if (is_text()) return text();
    return boolean() ? "true" : "false";
}

std::ostream & operator<<(std::ostream &out, const Value &v) { return out << v.render(); }

namespace {

std::optional<std::int64_t> parse_int(std::string_view s)
{
    std::int64_t value = 0;
    if (not s.empty() and s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() or ptr != s.data() + s.size() or s.empty()) return std::nullopt;
    return value;
}

std::string_view trim(std::string_view s)
{
    while (not s.empty() and std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (not s.empty() and std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}

std::optional<Rational> parse_rational(std::string_view text)
{
    text = trim(text);
    if (text.empty()) return std::nullopt;
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        auto n = parse_int(trim(text.substr(0, slash)));
        auto d = parse_int(trim(text.substr(slash + 1)));
        if (not n or not d or *d == 0) return std::nullopt;
        return Rational(*n, *d);
    }
    if (auto dot = text.find('.'); dot != std::string_view::npos) {
        std::string_view whole = text.substr(0, dot), frac = text.substr(dot + 1);
        bool negative = not whole.empty() and whole.front() == '-';
        if (negative) whole.remove_prefix(1);
        if (frac.empty() or frac.size() > 15) return std::nullopt;
        if (not std::all_of(frac.begin(), frac.end(), [](char c) { return c >= '0' and c <= '9'; })) return std::nullopt;
        auto w = whole.empty() ? std::optional<std::int64_t>(0) : parse_int(whole);
        auto f = parse_int(frac);
        if (not w or not f or *w < 0) return std::nullopt;
        std::int64_t scale = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
        Rational r(*w * scale + *f, scale);
        return negative ? -r : r;
    }
    auto i = parse_int(text);
    if (not i) return std::nullopt;
    return Rational(*i);
}

Value parse_value(std::string_view text, AttributeType type)
{
    switch (type) {
        case AttributeType::Integer: {
            auto i = parse_int(trim(text));
            if (not i) throw TypeError("expected integer, got '" + std::string(text) + "'");
            return Value(*i);
        }
        case AttributeType::Rational: {
            auto r = parse_rational(text);
            if (not r) throw TypeError("expected rational, got '" + std::string(text) + "'");
            return Value(*r);
        }
        case AttributeType::Text:
            return Value(std::string(text));
        case AttributeType::Boolean: {
            std::string lower(trim(text));
            std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
            if (lower == "true" or lower == "1" or lower == "t") return Value(true);
            if (lower == "false" or lower == "0" or lower == "f") return Value(false);
            throw TypeError("expected boolean, got '" + std::string(text) + "'");
        }
    }
    throw TypeError("unknown attribute type");
}

std::size_t TupleHash::operator()(const Tuple &t) const
{
    std::size_t h = 0xcbf29ce484222325ULL;
    for (const auto &v : t) h = (h ^ v.hash()) * 0x100000001b3ULL;
    return h;
}

std::string render_tuple(const Tuple &t)
{
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < t.size(); ++i) out << (i ? ", " : "") << t[i].render();
    out << ')';
    return out.str();
}

}
