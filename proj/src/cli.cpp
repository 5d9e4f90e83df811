#include "cex/cli.hpp"

#include "cex/error.hpp"
#include <CLI11.hpp>
#include <charconv>
#include <fstream>
#include <sstream>

namespace cex {

namespace {

void format_table(std::ostream &out, const std::string &title, const std::vector<std::string> &columns,
                  const std::vector<std::vector<std::string>> &rows)
{
    std::vector<std::size_t> width(columns.size());
    for (std::size_t i = 0; i < columns.size(); ++i) width[i] = columns[i].size();
    for (const auto &r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    auto rule = [&] {
        out << '+';
        for (auto w : width) out << std::string(w + 2, '-') << '+';
        out << '\n';
    };
    auto line = [&](const std::vector<std::string> &cells) {
        out << '|';
        for (std::size_t i = 0; i < cells.size(); ++i) out << ' ' << cells[i] << std::string(width[i] - cells[i].size() + 1, ' ') << '|';
        out << '\n';
    };
    out << title << '\n';
    rule();
    line(columns);
    rule();
    for (const auto &r : rows) line(r);
    rule();
}

/// Rows of `r`; those missing from `other` are flagged in a leading column.
void format_result(std::ostream &out, const std::string &title, const Relation &r, const Relation &other)
{
    std::vector<std::string> cols{""};
    for (const auto &c : r.schema) cols.push_back(c.name);
    std::vector<std::vector<std::string>> rows;
    for (const auto &t : r.rows) {
        std::vector<std::string> cells{other.contains(t) ? "" : "*"};
        for (const auto &v : t) cells.push_back(v.render());
        rows.push_back(std::move(cells));
    }
    format_table(out, title, cols, rows);
}

std::optional<std::pair<std::string, std::int64_t>> parse_param(const std::string &text)
{
    auto eq = text.find('=');
    if (eq == std::string::npos or eq == 0) return std::nullopt;
    std::int64_t v = 0;
    const char *first = text.data() + eq + 1, *last = text.data() + text.size();
    auto [end, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() or end != last or first == last) return std::nullopt;
    return std::pair{text.substr(0, eq), v};
}

}

std::string render_report_table(const Report &r, const Database &db)
{
    std::ostringstream out;
    if (r.agree) {
        out << "queries agree on the test database\n";
        return out.str();
    }
    const auto &c = r.counterexample;
    out << "counterexample of " << c.size() << (c.size() == 1 ? " tuple" : " tuples") << " (" << c.strategy
        << ", optimum " << r.optimum_guarantee << (c.verified ? ", verified" : ", NOT verified") << ")\n";
    if (c.param_setting and not c.param_setting->empty()) {
        out << "parameters:";
        for (const auto &[k, v] : *c.param_setting) out << ' ' << k << '=' << v;
        out << '\n';
    }
    out << '\n';
    for (std::size_t rel = 0; rel < db.relation_count(); ++rel) {
        const auto &schema = db.schema(rel);
        std::vector<std::string> cols{"id"};
        for (const auto &a : schema.attributes) cols.push_back(a.name);
        std::vector<std::vector<std::string>> rows;
        for (auto id : c.ids) {
            if (id.relation != rel) continue;
            std::vector<std::string> cells{db.alias(id)};
            for (const auto &v : db.row(id).values) cells.push_back(v.render());
            rows.push_back(std::move(cells));
        }
        if (rows.empty()) continue;
        format_table(out, schema.name, cols, rows);
        out << '\n';
    }
    format_result(out, "Q1 result", r.q1_result, r.q2_result);
    out << '\n';
    format_result(out, "Q2 result", r.q2_result, r.q1_result);
    out << "(* = row in only one result)\n";
    out << "time: raw " << r.timings.raw_eval << " ms, provenance " << r.timings.prov_eval << " ms, solver "
        << r.timings.solve << " ms\n";
    return out.str();
}

Counterexample counterexample_from_json(const nlohmann::json &j, const Database &db)
{
    const auto &cj = j.at("counterexample");
    Counterexample c;
    for (const auto &alias : cj.at("ids")) {
        auto id = db.parse_id(alias.get<std::string>());
        if (not id) throw UnknownTupleId("unknown tuple " + alias.get<std::string>());
        c.ids.insert(*id);
    }
    if (not cj.at("params").empty()) c.param_setting = cj.at("params").get<ParamAssignment>();
    c.strategy = j.at("strategy").get<std::string>();
    c.verified = cj.at("verified").get<bool>();
    return c;
}

int run(const CliConfig &config, std::ostream &out, std::ostream &err)
{
    Database db;
    TypedQuery q1, q2;
    try {
        db = load_database_files(config.schema, config.data);
        q1 = type_check(parse_query(read_file(config.q1)), db);
        q2 = type_check(parse_query(read_file(config.q2)), db);
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return ExitUsage;
    }
    try {
        if (config.emit_smt) {
            ProvStore store;
            auto problem = witness_problem(db, q1, q2, store, config.finder);
            std::ofstream f(*config.emit_smt);
            f << emit_smtlib(problem, [&](TupleId id) { return db.alias(id); });
            if (not f) throw std::runtime_error("cannot write " + config.emit_smt->string());
        }
        auto report = find(db, q1, q2, config.finder);
        if (config.json)
            out << to_json(report, db).dump(2) << '\n';
        else
            out << render_report_table(report, db);
        if (report.agree) {
            err << "queries agree on the test database\n";
            return ExitAgree;
        }
        return ExitFound;
    } catch (const QueriesAgree &e) {
        err << e.what() << '\n';
        return ExitAgree;
    } catch (const Timeout &e) {
        err << "timeout: " << e.what() << '\n';
        return ExitTimeout;
    } catch (const MissingParam &e) {
        err << "error: " << e.what() << " (use --param name=value)\n";
        return ExitUsage;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return ExitSearchFailed;
    }
}

int cli_main(int argc, const char *const *argv, std::ostream &out, std::ostream &err)
{
    CLI::App app{"Find a small database on which two relational-algebra queries differ."};
    app.require_subcommand(1);
    auto *compare = app.add_subcommand("compare", "Compare two query files against a database");
    CliConfig config;
    std::string strategy = "auto", format = "table", solver = "native", solver_cmd;
    std::string emit_smt;
    std::vector<std::string> params;
    compare->add_option("--schema", config.schema, "schema JSON file")->required()->check(CLI::ExistingFile);
    compare->add_option("--data", config.data, "directory of <Relation>.csv files")->required()->check(CLI::ExistingDirectory);
    compare->add_option("--q1", config.q1, "reference query")->required()->check(CLI::ExistingFile);
    compare->add_option("--q2", config.q2, "test query")->required()->check(CLI::ExistingFile);
    compare->add_option("--strategy", strategy, "auto, basic, opt_sigma, agg_basic, agg_param, agg_heuristic, fastpath or brute_force")
        ->check([](const std::string &s) { return parse_strategy(s) ? std::string() : "unknown strategy " + s; })
        ->capture_default_str();
    compare->add_option("--max-trials", config.finder.max_trials, "models per tuple for --legacy-enumerate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    compare->add_flag("--legacy-enumerate", config.finder.legacy_enumerate, "enumerate models instead of optimizing");
    compare->add_option("--solver", solver, "native or external")->check(CLI::IsMember({"native", "external"}))->capture_default_str();
    compare->add_option("--solver-cmd", solver_cmd, "optimizing SMT solver command for --solver external");
    compare->add_option("--emit-smt", emit_smt, "write the SMT-LIB problem of the counterexample here");
    compare->add_option("--format", format, "table or json")->check(CLI::IsMember({"table", "json"}))->capture_default_str();
    compare->add_option("--timeout", config.finder.timeout_seconds, "solver budget in seconds")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    compare->add_flag("--parameterize", config.finder.parameterize, "free the parameters of selections over aggregates");
    compare->add_option("--brute-cap", config.finder.brute_cap, "largest database brute_force accepts")->capture_default_str();
    compare->add_option("--param", params, "parameter value, name=value (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : int(ExitUsage);
    }
    for (const auto &p : params) {
        auto kv = parse_param(p);
        if (not kv) {
            err << "error: --param expects name=integer, got '" << p << "'\n";
            return ExitUsage;
        }
        config.finder.params[kv->first] = kv->second;
    }
    config.finder.strategy = *parse_strategy(strategy);
    config.json = format == "json";
    if (solver == "external") {
        if (solver_cmd.empty()) {
            err << "error: --solver external needs --solver-cmd\n";
            return ExitUsage;
        }
        config.finder.external_solver = solver_cmd;
    }
    if (not emit_smt.empty()) config.emit_smt = emit_smt;
    return run(config, out, err);
}

}
