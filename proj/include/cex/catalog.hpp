#pragma once

#include "cex/tuple_id.hpp"
#include "cex/value.hpp"
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cex {

struct Attribute
{
    std::string name;
    AttributeType type;
};

struct ForeignKey
{
    std::vector<std::string> columns;
    std::string ref_relation;
    std::vector<std::string> ref_columns;
};

struct FunctionalDependency
{
    std::vector<std::string> lhs;
    std::vector<std::string> rhs;
};

struct RelationSchema
{
    std::string name;
    std::vector<Attribute> attributes;
    std::vector<std::string> key;
    std::vector<ForeignKey> foreign_keys;
    std::vector<std::string> not_null;
    std::vector<FunctionalDependency> fds;

    std::optional<std::size_t> index_of(std::string_view attribute) const;
    /// Column positions of `names`; throws SchemaParseError naming the missing attribute.
    std::vector<std::size_t> indices_of(const std::vector<std::string> &names) const;
};

struct Row
{
    TupleId id;
    Tuple values;
};

/// Parents of one tuple under one foreign key.
struct ForeignKeyLink
{
    std::size_t fk;
    std::vector<TupleId> parents;
};

/** An immutable in-memory instance.  Rows keep the TupleIds assigned at load time, also after `restrict`. */
class Database
{
    public:
    Database() = default;
    /// Builds an instance from already-typed rows; `original_sizes` (per relation) fixes global numbering.
    Database(std::vector<RelationSchema> schemas, std::vector<std::vector<Row>> rows,
             std::vector<std::size_t> original_sizes = {});

    const std::vector<RelationSchema> & schemas() const { return schemas_; }
    std::size_t relation_count() const { return schemas_.size(); }
    const RelationSchema & schema(std::size_t relation) const { return schemas_.at(relation); }
    std::optional<std::size_t> relation_index(std::string_view name) const;

    std::span<const Row> rows(std::size_t relation) const { return rows_.at(relation); }
    bool contains(TupleId id) const;
    const Row & row(TupleId id) const;
    /// Total number of tuples.
    std::size_t size() const;
    std::vector<TupleId> ids() const;

    /// "Relation:ordinal".
    std::string render_id(TupleId id) const;
    /// "t<k>" where k is the 1-based position in global load order (the t-numbering of the original instance).
    std::string alias(TupleId id) const;
    std::size_t global_index(TupleId id) const;
    /// Parse either rendering back into an id of this database's schema.
    std::optional<TupleId> parse_id(std::string_view text) const;

    /// Foreign-key parents of a tuple, one entry per declared foreign key of its relation.
    const std::vector<ForeignKeyLink> & fk_links(TupleId id) const;
    bool has_foreign_keys() const;

    const std::vector<std::size_t> & original_sizes() const { return original_sizes_; }

    private:
    void index_rows();
    void link_foreign_keys();

    std::vector<RelationSchema> schemas_;
    std::vector<std::vector<Row>> rows_;
    std::vector<std::size_t> original_sizes_;
    std::vector<std::size_t> offsets_;
    std::vector<std::vector<std::int64_t>> position_; ///< ordinal-1 → row position, -1 when absent
    std::vector<std::vector<std::vector<ForeignKeyLink>>> fk_links_;
};

/// Parses the schema JSON document.  Throws SchemaParseError.
std::vector<RelationSchema> parse_schema(std::string_view schema_json);

/** Loads and validates an instance.  `tables` maps relation name to CSV text with a header row.
 * Throws SchemaParseError, TypeError (with "relation:row:column" location) or ConstraintViolation. */
Database load_database(std::string_view schema_json, const std::map<std::string, std::string> &tables);
/// Reads `<data_dir>/<relation>.csv` for every relation of the schema file.
Database load_database_files(const std::filesystem::path &schema_path, const std::filesystem::path &data_dir);

/// The subinstance holding exactly `ids`.  Foreign keys are not re-checked.  Throws UnknownTupleId.
Database restrict(const Database &db, const IdSet &ids);

struct ConstraintReport
{
    struct Violation
    {
        std::string kind;       ///< "key", "foreign_key", "not_null" or "fd"
        std::string constraint; ///< human-readable constraint name
        std::vector<TupleId> tuples;
    };
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
};

ConstraintReport check_constraints(const Database &db);

/// Smallest superset of `ids` closed under foreign keys (the first parent is taken when a reference is ambiguous).
IdSet fk_closure(const Database &db, const IdSet &ids);

std::string read_file(const std::filesystem::path &path);

}
