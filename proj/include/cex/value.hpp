#pragma once

#include <boost/rational.hpp>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cex {

using Rational = boost::rational<std::int64_t>;

enum class AttributeType { Integer, Rational, Text, Boolean };

std::string_view to_string(AttributeType t);
std::optional<AttributeType> parse_attribute_type(std::string_view name);

inline bool is_numeric(AttributeType t) { return t == AttributeType::Integer or t == AttributeType::Rational; }

/// Integer and rational columns compare with each other; everything else only with its own type.
inline bool comparable(AttributeType a, AttributeType b)
{
    return a == b or (is_numeric(a) and is_numeric(b));
}

/** A typed cell value.  Numbers are exact rationals; integers are rationals with denominator one. */
class Value
{
    public:
    Value() : v_(Rational(0)) { }
    Value(Rational r) : v_(r) { }
    Value(std::int64_t i) : v_(Rational(i)) { }
    Value(int i) : v_(Rational(i)) { }
    Value(std::string s) : v_(std::move(s)) { }
    Value(const char *s) : v_(std::string(s)) { }
    Value(bool b) : v_(b) { }

    bool is_number() const { return std::holds_alternative<Rational>(v_); }
    bool is_text() const { return std::holds_alternative<std::string>(v_); }
    bool is_bool() const { return std::holds_alternative<bool>(v_); }

    const Rational & number() const { return std::get<Rational>(v_); }
    const std::string & text() const { return std::get<std::string>(v_); }
    bool boolean() const { return std::get<bool>(v_); }

    /// Numbers < text < booleans; within a kind the natural order.
    friend std::strong_ordering operator<=>(const Value &a, const Value &b);
    friend bool operator==(const Value &a, const Value &b) { return a.v_ == b.v_; }

    std::size_t hash() const;

    /// Plain rendering: integers without decimals, terminating fractions as decimals, otherwise n/d.
    std::string render() const;

    private:
    std::variant<Rational, std::string, bool> v_;
};

std::ostream & operator<<(std::ostream &out, const Value &v);

/// Parses a cell as the given type; throws TypeError (without location) on failure.
Value parse_value(std::string_view text, AttributeType type);

/// Exact decimal ("87.5"), fraction ("175/2") or integer literal.
std::optional<Rational> parse_rational(std::string_view text);
std::string render_rational(const Rational &r);

using Tuple = std::vector<Value>;

struct TupleHash
{
    std::size_t operator()(const Tuple &t) const;
};

std::string render_tuple(const Tuple &t);

}
