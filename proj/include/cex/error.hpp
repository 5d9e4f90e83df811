#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cex {

/// Base of every error raised by the engine.
class Error : public std::runtime_error
{
    public:
    explicit Error(const std::string &what) : std::runtime_error(what) { }
};

class SchemaParseError : public Error
{
    public:
    using Error::Error;
};

/// A value or expression has the wrong type. `where` locates the offending cell or node when known.
class TypeError : public Error
{
    public:
    TypeError(const std::string &what, std::string where = {})
        : Error(where.empty() ? what : where + ": " + what), where_(std::move(where))
    { }
    const std::string & where() const { return where_; }

    private:
    std::string where_;
};

class ConstraintViolation : public Error
{
    public:
    ConstraintViolation(std::string kind, const std::string &what, std::vector<std::string> tuples)
        : Error(kind + " violation: " + what), kind_(std::move(kind)), tuples_(std::move(tuples))
    { }
    const std::string & kind() const { return kind_; }
    const std::vector<std::string> & tuples() const { return tuples_; }

    private:
    std::string kind_;
    std::vector<std::string> tuples_;
};

class UnknownTupleId : public Error { public: using Error::Error; };
class DanglingReference : public Error { public: using Error::Error; };

class SyntaxError : public Error
{
    public:
    SyntaxError(const std::string &what, std::size_t line, std::size_t column)
        : Error("syntax error at " + std::to_string(line) + ":" + std::to_string(column) + ": " + what)
        , message_(what), line_(line), column_(column)
    { }
    const std::string & message() const { return message_; }
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

    private:
    std::string message_;
    std::size_t line_;
    std::size_t column_;
};

class UnionIncompatible : public Error { public: using Error::Error; };
class AggRestrictionViolated : public Error { public: using Error::Error; };
class MissingParam : public Error { public: using Error::Error; };
class UnknownParam : public Error { public: using Error::Error; };

class ArityError : public Error { public: using Error::Error; };
class UnboundVariable : public Error { public: using Error::Error; };
class DnfOverflow : public Error
{
    public:
    explicit DnfOverflow(std::size_t cap)
        : Error("DNF expansion exceeded " + std::to_string(cap) + " minterms"), cap_(cap)
    { }
    std::size_t cap() const { return cap_; }

    private:
    std::size_t cap_;
};
class EmptyDnf : public Error { public: using Error::Error; };

class TupleNotInDifference : public Error { public: using Error::Error; };
/// Raised when both queries return the same result on the database: no counterexample exists.
class QueriesAgree : public Error
{
    public:
    QueriesAgree() : Error("queries agree on the test database") { }
};

class Unsat : public Error { public: Unsat() : Error("constraints are unsatisfiable") { } };
class Timeout : public Error
{
    public:
    explicit Timeout(double budget_seconds)
        : Error("solver budget of " + std::to_string(budget_seconds) + " s exhausted"), budget_(budget_seconds)
    { }
    double budget() const { return budget_; }

    private:
    double budget_;
};

class NoModelFound : public Error { public: using Error::Error; };
class NotEligible : public Error { public: using Error::Error; };
class NotHeuristicEligible : public Error { public: using Error::Error; };
class RetriesExhausted : public Error { public: using Error::Error; };
class CapExceeded : public Error { public: using Error::Error; };
class SolverBackendError : public Error { public: using Error::Error; };

}
