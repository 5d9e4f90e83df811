#include "cex/service.hpp"

#include "cex/error.hpp"
#include <httplib.h>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <random>
#include <sstream>

namespace cex {

namespace {

std::string trimmed(std::string s)
{
    while (not s.empty() and std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

std::string now_utc()
{
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
    return s.str();
}

nlohmann::json schema_json(const Database &db)
{
    auto out = nlohmann::json::array();
    for (const auto &r : db.schemas()) {
        nlohmann::json rel{{"name", r.name}, {"key", r.key}};
        auto attrs = nlohmann::json::array();
        for (const auto &a : r.attributes) attrs.push_back({{"name", a.name}, {"type", to_string(a.type)}});
        rel["attributes"] = attrs;
        auto fks = nlohmann::json::array();
        for (const auto &fk : r.foreign_keys)
            fks.push_back({{"columns", fk.columns}, {"references", {{"relation", fk.ref_relation}, {"columns", fk.ref_columns}}}});
        rel["foreign_keys"] = fks;
        out.push_back(rel);
    }
    return out;
}

Response error(int status, const std::string &kind, const std::string &message)
{
    return {status, {{"error", kind}, {"message", message}}};
}

/// Counterexample relations without the hidden instance's tuple numbering.
nlohmann::json public_tuples(const Report &r, const Database &db)
{
    auto tuples = to_json(r, db)["counterexample"]["tuples"];
    for (auto &[name, rel] : tuples.items()) rel.erase("ids");
    return tuples;
}

std::optional<std::string> string_field(const nlohmann::json &j, const char *name)
{
    auto it = j.find(name);
    if (it == j.end() or not it->is_string()) return std::nullopt;
    return it->get<std::string>();
}

}

std::vector<Problem> load_problems(const std::filesystem::path &dir)
{
    std::vector<Problem> out;
    for (const auto &entry : std::filesystem::directory_iterator(dir)) {
        if (not entry.is_directory()) continue;
        const auto &p = entry.path();
        Problem problem;
        problem.id = p.filename().string();
        try {
            problem.prompt = trimmed(read_file(p / "prompt.txt"));
            problem.db = load_database_files(p / "schema.json", p);
            if (std::filesystem::exists(p / "params.json"))
                problem.params = nlohmann::json::parse(read_file(p / "params.json")).get<ParamAssignment>();
            problem.reference = type_check(parse_query(read_file(p / "reference.ra")), problem.db);
            eval_plain(problem.db, problem.reference, problem.params);
        } catch (const std::exception &e) {
            throw Error("problem " + problem.id + ": " + e.what());
        }
        out.push_back(std::move(problem));
    }
    std::sort(out.begin(), out.end(), [](const Problem &a, const Problem &b) { return a.id < b.id; });
    return out;
}

ServiceConfig ServiceConfig::from_environment()
{
    ServiceConfig c;
    if (auto *v = std::getenv("CEX_PORT")) c.port = std::stoi(v);
    if (auto *v = std::getenv("CEX_PROBLEMS_DIR")) c.problems_dir = v;
    if (auto *v = std::getenv("CEX_LOG_PATH")) c.log_path = v;
    if (auto *v = std::getenv("CEX_SOLVER_CMD"); v and *v) c.solver_command = v;
    if (auto *v = std::getenv("CEX_CHECK_TIMEOUT")) c.check_timeout = std::stod(v);
    return c;
}

GradingService::GradingService(std::vector<Problem> problems, const ServiceConfig &config)
    : problems_(std::move(problems)), config_(config), log_(config.log_path, std::ios::app)
{
    if (not log_) throw Error("cannot open submission log " + config.log_path.string());
}

const Problem * GradingService::problem(const std::string &id) const
{
    for (const auto &p : problems_)
        if (p.id == id) return &p;
    return nullptr;
}

Response GradingService::create_session(const std::string &body)
{
    if (not trimmed(body).empty()) {
        auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() or not j.is_object()) return error(400, "bad_request", "body must be empty or a JSON object");
    }
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::string id;
    {
        std::lock_guard lock(sessions_mutex_);
        do {
            std::ostringstream s;
            s << std::hex << std::setfill('0') << std::setw(16) << rng() << std::setw(16) << rng();
            id = s.str();
        } while (sessions_.count(id));
        sessions_[id];
    }
    return {201, {{"session_id", id}}};
}

Response GradingService::list_problems() const
{
    auto out = nlohmann::json::array();
    for (const auto &p : problems_) out.push_back({{"id", p.id}, {"prompt", p.prompt}, {"schema", schema_json(p.db)}});
    return {200, out};
}

Response GradingService::check(const std::string &problem_id, const std::string &body)
{
    const auto *p = problem(problem_id);
    if (not p) return error(404, "unknown_problem", "no problem " + problem_id);
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() or not j.is_object()) return error(400, "bad_request", "body must be a JSON object");
    auto session = string_field(j, "session_id");
    auto query = string_field(j, "query");
    if (not session or not query) return error(400, "bad_request", "session_id and query are required strings");
    {
        std::lock_guard lock(sessions_mutex_);
        if (not sessions_.count(*session)) return error(404, "unknown_session", "no session " + *session);
    }

    auto invalid = [&](Response r) {
        record(*session, *query, {p->id, now_utc(), "invalid", std::nullopt});
        return r;
    };
    TypedQuery submission;
    try {
        submission = type_check(parse_query(*query), p->db);
    } catch (const SyntaxError &e) {
        return invalid({422, {{"error", "syntax"}, {"message", e.message()}, {"line", e.line()}, {"column", e.column()}}});
    } catch (const Error &e) {
        return invalid(error(422, "validation", e.what()));
    }
    if (submission.schema.size() != p->reference.schema.size())
        return invalid(error(422, "validation",
                             "the result has " + std::to_string(submission.schema.size()) + " columns, expected " +
                                 std::to_string(p->reference.schema.size())));

    FinderOptions options;
    options.params = p->params;
    options.timeout_seconds = config_.check_timeout;
    options.external_solver = config_.solver_command;
    Report report;
    try {
        report = find(p->db, p->reference, submission, options);
    } catch (const Timeout &) {
        return error(503, "timeout", "the check exceeded its compute budget; try again later");
    } catch (const AggRestrictionViolated &e) {
        return invalid(error(422, "validation", e.what()));
    } catch (const UnionIncompatible &e) {
        return invalid(error(422, "validation", e.what()));
    } catch (const MissingParam &e) {
        return invalid(error(422, "validation", e.what()));
    } catch (const UnknownParam &e) {
        return invalid(error(422, "validation", e.what()));
    } catch (const std::exception &e) {
        return error(500, "internal", e.what());
    }

    if (report.agree) {
        record(*session, *query, {p->id, now_utc(), "correct", std::nullopt});
        return {200, {{"verdict", "correct"}}};
    }
    const auto &c = report.counterexample;
    nlohmann::json out{{"verdict", "incorrect"},
                       {"counterexample", {{"size", c.size()}, {"tuples", public_tuples(report, p->db)}}},
                       {"submission_result", to_json(report.q2_result)},
                       {"reference_result", to_json(report.q1_result)}};
    if (c.param_setting and not c.param_setting->empty()) out["counterexample"]["params"] = *c.param_setting;
    if (c.size() > config_.warn_size)
        out["warning"] = "large counterexample: " + std::to_string(c.size()) + " tuples";
    record(*session, *query, {p->id, now_utc(), "incorrect", c.size()});
    return {200, out};
}

Response GradingService::history(const std::string &session_id) const
{
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return error(404, "unknown_session", "no session " + session_id);
    auto out = nlohmann::json::array();
    for (const auto &s : it->second) {
        nlohmann::json e{{"problem_id", s.problem_id}, {"timestamp", s.timestamp}, {"verdict", s.verdict}};
        if (s.size) e["size"] = *s.size;
        out.push_back(e);
    }
    return {200, out};
}

void GradingService::record(const std::string &session, const std::string &query, SubmissionSummary s)
{
    nlohmann::json line{{"timestamp", s.timestamp}, {"session_id", session}, {"problem_id", s.problem_id},
                        {"query", query},           {"verdict", s.verdict}};
    if (s.size) line["size"] = *s.size;
    {
        std::lock_guard lock(log_mutex_);
        log_ << line.dump() << '\n';
        log_.flush();
    }
    std::lock_guard lock(sessions_mutex_);
    sessions_[session].push_back(std::move(s));
}

void GradingService::mount(httplib::Server &server)
{
    auto reply = [](httplib::Response &res, const Response &r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    server.Post("/sessions", [this, reply](const httplib::Request &req, httplib::Response &res) {
        reply(res, create_session(req.body));
    });
    server.Get("/problems", [this, reply](const httplib::Request &, httplib::Response &res) {
        reply(res, list_problems());
    });
    server.Post(R"(/problems/([^/]+)/check)", [this, reply](const httplib::Request &req, httplib::Response &res) {
        reply(res, check(req.matches[1], req.body));
    });
    server.Get(R"(/sessions/([^/]+)/history)", [this, reply](const httplib::Request &req, httplib::Response &res) {
        reply(res, history(req.matches[1]));
    });
}

}
