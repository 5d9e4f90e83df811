#include "cex/catalog.hpp"

#include "cex/error.hpp"
#include <algorithm>
#include <boost/tokenizer.hpp>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <unordered_map>

namespace cex {

using json = nlohmann::json;

std::optional<std::size_t> RelationSchema::index_of(std::string_view attribute) const
{
    for (std::size_t i = 0; i < attributes.size(); ++i)
        if (attributes[i].name == attribute) return i;
    return std::nullopt;
}

std::vector<std::size_t> RelationSchema::indices_of(const std::vector<std::string> &names) const
{
    std::vector<std::size_t> out;
    out.reserve(names.size());
    for (const auto &n : names) {
        auto i = index_of(n);
        if (not i) throw SchemaParseError("relation " + name + " has no attribute '" + n + "'");
        out.push_back(*i);
    }
    return out;
}

Database::Database(std::vector<RelationSchema> schemas, std::vector<std::vector<Row>> rows,
                   std::vector<std::size_t> original_sizes)
    : schemas_(std::move(schemas)), rows_(std::move(rows)), original_sizes_(std::move(original_sizes))
{
    rows_.resize(schemas_.size());
    if (original_sizes_.empty()) {
        for (const auto &r : rows_) {
            std::size_t max_ordinal = 0;
            for (const auto &row : r) max_ordinal = std::max<std::size_t>(max_ordinal, row.id.ordinal);
            original_sizes_.push_back(max_ordinal);
        }
    }
    offsets_.assign(schemas_.size(), 0);
    for (std::size_t r = 1; r < schemas_.size(); ++r) offsets_[r] = offsets_[r - 1] + original_sizes_[r - 1];
    index_rows();
    link_foreign_keys();
}

void Database::index_rows()
{
    position_.assign(schemas_.size(), {});
    for (std::size_t r = 0; r < schemas_.size(); ++r) {
        position_[r].assign(original_sizes_[r], -1);
        for (std::size_t i = 0; i < rows_[r].size(); ++i) {
            const auto &id = rows_[r][i].id;
            if (id.relation != r or id.ordinal == 0 or id.ordinal > original_sizes_[r])
                throw UnknownTupleId("row id out of range for relation " + schemas_[r].name);
            position_[r][id.ordinal - 1] = std::int64_t(i);
        }
    }
}

void Database::link_foreign_keys()
{
    fk_links_.assign(schemas_.size(), {});
    for (std::size_t r = 0; r < schemas_.size(); ++r) {
        const auto &schema = schemas_[r];
        fk_links_[r].assign(rows_[r].size(), {});
        for (std::size_t f = 0; f < schema.foreign_keys.size(); ++f) {
            const auto &fk = schema.foreign_keys[f];
            auto parent = relation_index(fk.ref_relation);
            if (not parent) throw SchemaParseError("foreign key references unknown relation " + fk.ref_relation);
            auto child_cols = schema.indices_of(fk.columns);
            auto parent_cols = schemas_[*parent].indices_of(fk.ref_columns);
            std::unordered_map<Tuple, std::vector<TupleId>, TupleHash> index;
            for (const auto &row : rows_[*parent]) {
                Tuple key;
                for (auto c : parent_cols) key.push_back(row.values[c]);
                index[key].push_back(row.id);
            }
            for (std::size_t i = 0; i < rows_[r].size(); ++i) {
                Tuple key;
                for (auto c : child_cols) key.push_back(rows_[r][i].values[c]);
                ForeignKeyLink link{f, {}};
                if (auto it = index.find(key); it != index.end()) link.parents = it->second;
                fk_links_[r][i].push_back(std::move(link));
            }
        }
    }
}

std::optional<std::size_t> Database::relation_index(std::string_view name) const
{
    for (std::size_t i = 0; i < schemas_.size(); ++i)
        if (schemas_[i].name == name) return i;
    return std::nullopt;
}

bool Database::contains(TupleId id) const
{
    return id.relation < schemas_.size() and id.ordinal >= 1 and id.ordinal <= original_sizes_[id.relation] and
           position_[id.relation][id.ordinal - 1] >= 0;
}

const Row & Database::row(TupleId id) const
{
    if (not contains(id)) throw UnknownTupleId("unknown tuple " + render_id(id));
    return rows_[id.relation][std::size_t(position_[id.relation][id.ordinal - 1])];
}

std::size_t Database::size() const
{
    std::size_t n = 0;
    for (const auto &r : rows_) n += r.size();
    return n;
}

std::vector<TupleId> Database::ids() const
{
    std::vector<TupleId> out;
    out.reserve(size());
    for (const auto &r : rows_)
        for (const auto &row : r) out.push_back(row.id);
    std::sort(out.begin(), out.end());
    return out;
}

std::string Database::render_id(TupleId id) const
{
    std::string rel = id.relation < schemas_.size() ? schemas_[id.relation].name : "?" + std::to_string(id.relation);
    return rel + ":" + std::to_string(id.ordinal);
}

std::size_t Database::global_index(TupleId id) const
{
    if (id.relation >= offsets_.size()) throw UnknownTupleId("unknown relation in tuple id");
    return offsets_[id.relation] + id.ordinal;
}

std::string Database::alias(TupleId id) const { return "t" + std::to_string(global_index(id)); }

std::optional<TupleId> Database::parse_id(std::string_view text) const
{
    if (auto colon = text.rfind(':'); colon != std::string_view::npos) {
        auto rel = relation_index(text.substr(0, colon));
        if (not rel) return std::nullopt;
        try {
            auto ordinal = std::stoul(std::string(text.substr(colon + 1)));
            return TupleId{std::uint32_t(*rel), std::uint32_t(ordinal)};
        } catch (const std::exception &) {
            return std::nullopt;
        }
    }
    if (text.size() > 1 and text.front() == 't') {
        std::size_t k = 0;
        try {
            k = std::stoul(std::string(text.substr(1)));
        } catch (const std::exception &) {
            return std::nullopt;
        }
        for (std::size_t r = 0; r < schemas_.size(); ++r)
            if (k > offsets_[r] and k <= offsets_[r] + original_sizes_[r])
                return TupleId{std::uint32_t(r), std::uint32_t(k - offsets_[r])};
    }
    return std::nullopt;
}

const std::vector<ForeignKeyLink> & Database::fk_links(TupleId id) const
{
    if (not contains(id)) throw UnknownTupleId("unknown tuple " + render_id(id));
    return fk_links_[id.relation][std::size_t(position_[id.relation][id.ordinal - 1])];
}

bool Database::has_foreign_keys() const
{
    return std::any_of(schemas_.begin(), schemas_.end(), [](const auto &s) { return not s.foreign_keys.empty(); });
}

namespace {

std::vector<std::string> string_list(const json &j, const char *field)
{
    std::vector<std::string> out;
    if (not j.contains(field)) return out;
    if (not j.at(field).is_array()) throw SchemaParseError(std::string("'") + field + "' must be an array");
    for (const auto &e : j.at(field)) out.push_back(e.get<std::string>());
    return out;
}

void require_attributes(const RelationSchema &s, const std::vector<std::string> &names, const char *what)
{
    for (const auto &n : names)
        if (not s.index_of(n))
            throw SchemaParseError(std::string(what) + " of " + s.name + " names unknown attribute '" + n + "'");
}

void validate_schemas(const std::vector<RelationSchema> &schemas)
{
    std::set<std::string> names;
    for (const auto &s : schemas) {
        if (not names.insert(s.name).second) throw SchemaParseError("duplicate relation " + s.name);
        std::set<std::string> attrs;
        for (const auto &a : s.attributes)
            if (not attrs.insert(a.name).second)
                throw SchemaParseError("duplicate attribute " + a.name + " in " + s.name);
        require_attributes(s, s.key, "key");
        require_attributes(s, s.not_null, "not_null");
        for (const auto &fd : s.fds) {
            require_attributes(s, fd.lhs, "fd");
            require_attributes(s, fd.rhs, "fd");
        }
    }
    for (const auto &s : schemas) {
        for (const auto &fk : s.foreign_keys) {
            require_attributes(s, fk.columns, "foreign key");
            auto parent = std::find_if(schemas.begin(), schemas.end(),
                                       [&](const auto &p) { return p.name == fk.ref_relation; });
            if (parent == schemas.end())
                throw SchemaParseError("foreign key of " + s.name + " references unknown relation " + fk.ref_relation);
            require_attributes(*parent, fk.ref_columns, "foreign key target");
            if (fk.columns.size() != fk.ref_columns.size() or fk.columns.empty())
                throw SchemaParseError("foreign key of " + s.name + " has mismatched column lists");
            for (std::size_t i = 0; i < fk.columns.size(); ++i) {
                auto ct = s.attributes[*s.index_of(fk.columns[i])].type;
                auto pt = parent->attributes[*parent->index_of(fk.ref_columns[i])].type;
                if (not comparable(ct, pt))
                    throw SchemaParseError("foreign key of " + s.name + " joins incomparable types");
            }
        }
    }
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text)
{
    using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
    boost::escaped_list_separator<char> separator('\0', ',', '"');
    std::vector<std::vector<std::string>> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (not line.empty() and line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<std::string> cells;
        try {
            Tokenizer tok(line, separator);
            cells.assign(tok.begin(), tok.end());
        } catch (const boost::escaped_list_error &e) {
            throw TypeError(std::string("malformed CSV line: ") + e.what());
        }
        out.push_back(std::move(cells));
    }
    if (not text.empty() and text.substr(0, 3) == "\xEF\xBB\xBF" and not out.empty() and not out[0].empty())
        out[0][0].erase(0, 3);
    return out;
}

std::string trim_copy(const std::string &s)
{
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}

std::vector<RelationSchema> parse_schema(std::string_view schema_json)
{
    json doc;
    try {
        doc = json::parse(schema_json);
    } catch (const json::parse_error &e) {
        throw SchemaParseError(std::string("schema is not valid JSON: ") + e.what());
    }
    std::vector<RelationSchema> out;
    try {
        if (not doc.is_object() or not doc.contains("relations") or not doc.at("relations").is_array())
            throw SchemaParseError("schema must be an object with a 'relations' array");
        for (const auto &r : doc.at("relations")) {
            RelationSchema s;
            s.name = r.at("name").get<std::string>();
            for (const auto &a : r.at("attributes")) {
                auto type_name = a.at("type").get<std::string>();
                auto type = parse_attribute_type(type_name);
                if (not type) throw SchemaParseError("unknown attribute type '" + type_name + "'");
                s.attributes.push_back({a.at("name").get<std::string>(), *type});
            }
            s.key = string_list(r, "key");
            s.not_null = string_list(r, "not_null");
            if (r.contains("foreign_keys")) {
                for (const auto &f : r.at("foreign_keys")) {
                    ForeignKey fk;
                    fk.columns = string_list(f, "columns");
                    fk.ref_relation = f.at("references").at("relation").get<std::string>();
                    fk.ref_columns = string_list(f.at("references"), "columns");
                    s.foreign_keys.push_back(std::move(fk));
                }
            }
            if (r.contains("fds"))
                for (const auto &f : r.at("fds")) s.fds.push_back({string_list(f, "lhs"), string_list(f, "rhs")});
            out.push_back(std::move(s));
        }
    } catch (const json::exception &e) {
        throw SchemaParseError(std::string("malformed schema: ") + e.what());
    }
    validate_schemas(out);
    return out;
}

Database load_database(std::string_view schema_json, const std::map<std::string, std::string> &tables)
{
    auto schemas = parse_schema(schema_json);
    std::vector<std::vector<Row>> rows(schemas.size());
    for (std::size_t r = 0; r < schemas.size(); ++r) {
        const auto &s = schemas[r];
        auto it = tables.find(s.name);
        if (it == tables.end()) throw SchemaParseError("no table given for relation " + s.name);
        auto lines = parse_csv(it->second);
        if (lines.empty()) throw SchemaParseError("table " + s.name + " lacks a header row");
        const auto &header = lines.front();
        if (header.size() != s.attributes.size())
            throw SchemaParseError("header of " + s.name + " does not match the schema's attribute list");
        for (std::size_t c = 0; c < header.size(); ++c)
            if (trim_copy(header[c]) != s.attributes[c].name)
                throw SchemaParseError("header of " + s.name + " column " + std::to_string(c + 1) + " is '" +
                                       header[c] + "', expected '" + s.attributes[c].name + "'");
        for (std::size_t i = 1; i < lines.size(); ++i) {
            std::string where = s.name + ":" + std::to_string(i);
            if (lines[i].size() != s.attributes.size())
                throw TypeError("expected " + std::to_string(s.attributes.size()) + " cells, got " +
                                    std::to_string(lines[i].size()), where);
            Row row{TupleId{std::uint32_t(r), std::uint32_t(i)}, {}};
            for (std::size_t c = 0; c < lines[i].size(); ++c) {
                try {
                    row.values.push_back(parse_value(lines[i][c], s.attributes[c].type));
                } catch (const TypeError &e) {
                    throw TypeError(e.what(), where + ":" + s.attributes[c].name);
                }
            }
            rows[r].push_back(std::move(row));
        }
    }
    Database db(std::move(schemas), std::move(rows));
    auto report = check_constraints(db);
    if (not report.ok()) {
        const auto &v = report.violations.front();
        std::vector<std::string> ids;
        for (auto id : v.tuples) ids.push_back(db.render_id(id));
        throw ConstraintViolation(v.kind, v.constraint, ids);
    }
    return db;
}

std::string read_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (not in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Database load_database_files(const std::filesystem::path &schema_path, const std::filesystem::path &data_dir)
{
    auto schema_text = read_file(schema_path);
    auto schemas = parse_schema(schema_text);
    std::map<std::string, std::string> tables;
    for (const auto &s : schemas) {
        auto file = data_dir / (s.name + ".csv");
        if (not std::filesystem::exists(file)) throw SchemaParseError("missing data file " + file.string());
        tables[s.name] = read_file(file);
    }
    return load_database(schema_text, tables);
}

Database restrict(const Database &db, const IdSet &ids)
{
    for (auto id : ids)
        if (not db.contains(id)) throw UnknownTupleId("cannot restrict to unknown tuple " + db.render_id(id));
    std::vector<std::vector<Row>> rows(db.relation_count());
    for (std::size_t r = 0; r < db.relation_count(); ++r)
        for (const auto &row : db.rows(r))
            if (ids.count(row.id)) rows[r].push_back(row);
    return Database(db.schemas(), std::move(rows), db.original_sizes());
}

ConstraintReport check_constraints(const Database &db)
{
    ConstraintReport report;
    for (std::size_t r = 0; r < db.relation_count(); ++r) {
        const auto &s = db.schema(r);
        auto rows = db.rows(r);
        auto group_by = [&](const std::vector<std::size_t> &cols) {
            std::map<Tuple, std::vector<const Row *>> groups;
            for (const auto &row : rows) {
                Tuple key;
                for (auto c : cols) key.push_back(row.values[c]);
                groups[key].push_back(&row);
            }
            return groups;
        };
        if (not s.key.empty()) {
            for (const auto &[key, members] : group_by(s.indices_of(s.key))) {
                if (members.size() < 2) continue;
                ConstraintReport::Violation v{"key", s.name + " key (" + render_tuple(key) + ") is not unique", {}};
                for (auto *m : members) v.tuples.push_back(m->id);
                report.violations.push_back(std::move(v));
            }
        }
        for (const auto &fd : s.fds) {
            auto rhs = s.indices_of(fd.rhs);
            for (const auto &[key, members] : group_by(s.indices_of(fd.lhs))) {
                bool consistent = true;
                for (auto *m : members)
                    for (auto c : rhs)
                        if (m->values[c] != members.front()->values[c]) consistent = false;
                if (consistent) continue;
                ConstraintReport::Violation v{"fd", s.name + " functional dependency violated for " + render_tuple(key), {}};
                for (auto *m : members) v.tuples.push_back(m->id);
                report.violations.push_back(std::move(v));
            }
        }
        // Cells are never NULL in this engine, so not-null constraints hold by construction.
        for (const auto &row : rows) {
            for (const auto &link : db.fk_links(row.id)) {
                if (not link.parents.empty()) continue;
                const auto &fk = s.foreign_keys[link.fk];
                report.violations.push_back({"foreign_key",
                                             s.name + " references missing " + fk.ref_relation + " tuple",
                                             {row.id}});
            }
        }
    }
    return report;
}

IdSet fk_closure(const Database &db, const IdSet &ids)
{
    IdSet closed;
    std::vector<TupleId> work(ids.begin(), ids.end());
    while (not work.empty()) {
        auto id = work.back();
        work.pop_back();
        if (not closed.insert(id).second) continue;
        for (const auto &link : db.fk_links(id)) {
            if (link.parents.empty()) continue;
            bool satisfied = std::any_of(link.parents.begin(), link.parents.end(),
                                         [&](TupleId p) { return closed.count(p) or ids.count(p); });
            if (not satisfied) work.push_back(link.parents.front());
            else
                for (auto p : link.parents)
                    if (ids.count(p) and not closed.count(p)) work.push_back(p);
        }
    }
    return closed;
}

}
