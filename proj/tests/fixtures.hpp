#pragma once

#include "cex/catalog.hpp"
#include "cex/ra_ast.hpp"
#include "cex/typed_query.hpp"
#include <filesystem>
#include <string>

namespace cex::testing {

inline std::filesystem::path data_dir(const std::string &name)
{
    return std::filesystem::path(CEX_TEST_DATA) / name;
}

inline Database load_fixture(const std::string &name)
{
    return load_database_files(data_dir(name) / "schema.json", data_dir(name));
}

/// Id for the alias "t<k>".
inline TupleId tid(const Database &db, const std::string &alias)
{
    auto id = db.parse_id(alias);
    if (not id) throw std::invalid_argument("bad alias " + alias);
    return *id;
}

inline IdSet ids(const Database &db, std::initializer_list<const char *> aliases)
{
    IdSet out;
    for (auto a : aliases) out.insert(tid(db, a));
    return out;
}

inline QueryAst load_query(const std::string &fixture, const std::string &file)
{
    return parse_query(read_file(data_dir(fixture) / file));
}

/// The running example: Q1 (exactly one CS course) and Q2 (at least one CS course).
struct RunningExample
{
    Database db = load_fixture("school");
    TypedQuery q1 = type_check(load_query("school", "q1.ra"), db);
    TypedQuery q2 = type_check(load_query("school", "q2.ra"), db);
};

}
