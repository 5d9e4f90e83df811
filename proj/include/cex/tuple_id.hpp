#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <set>

namespace cex {

/** Stable identity of a base tuple: the relation's position in the schema and the 1-based row position at load time.
 * Ordering is by relation, then ordinal, which reproduces the global load order. */
struct TupleId
{
    std::uint32_t relation = 0;
    std::uint32_t ordinal = 0;

    friend auto operator<=>(const TupleId&, const TupleId&) = default;
};

struct TupleIdHash
{
    std::size_t operator()(TupleId id) const
    {
        return std::hash<std::uint64_t>{}((std::uint64_t(id.relation) << 32) | id.ordinal);
    }
};

using IdSet = std::set<TupleId>;

}
