#pragma once

#include "cex/finder.hpp"
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace httplib { class Server; }

namespace cex {

/// One exercise: the prompt is public, the reference query and database are not.
struct Problem
{
    std::string id;
    std::string prompt;
    Database db;
    TypedQuery reference;
    ParamAssignment params;
};

/** Problems from a directory with one subdirectory per problem holding schema.json, <Relation>.csv files,
 * reference.ra, prompt.txt and optionally params.json ({"name": integer}).  Sorted by id; throws on any invalid
 * problem so that a broken registry never starts. */
std::vector<Problem> load_problems(const std::filesystem::path &dir);

struct ServiceConfig
{
    int port = 8080;
    std::filesystem::path problems_dir = "problems";
    std::filesystem::path log_path = "submissions.jsonl";
    std::optional<std::string> solver_command;
    double check_timeout = 30.0;       ///< seconds per check
    std::size_t warn_size = 50;        ///< counterexamples above this size carry a warning

    /// CEX_PORT, CEX_PROBLEMS_DIR, CEX_LOG_PATH, CEX_SOLVER_CMD, CEX_CHECK_TIMEOUT over the defaults.
    static ServiceConfig from_environment();
};

struct Response
{
    int status = 200;
    nlohmann::json body;
};

struct SubmissionSummary
{
    std::string problem_id;
    std::string timestamp;
    std::string verdict;                    ///< "correct", "incorrect" or "invalid"
    std::optional<std::size_t> size;        ///< counterexample size when incorrect
};

/** Request handlers of the grading API.  Thread-safe: the registry is immutable, sessions sit behind one mutex
 * and the submission log behind another. */
class GradingService
{
    public:
    GradingService(std::vector<Problem> problems, const ServiceConfig &config);

    Response create_session(const std::string &body);
    Response list_problems() const;
    Response check(const std::string &problem_id, const std::string &body);
    Response history(const std::string &session_id) const;

    /// Routes: POST /sessions, GET /problems, POST /problems/{id}/check, GET /sessions/{id}/history.
    void mount(httplib::Server &server);

    private:
    const Problem * problem(const std::string &id) const;
    void record(const std::string &session, const std::string &query, SubmissionSummary s);

    std::vector<Problem> problems_;
    ServiceConfig config_;
    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::vector<SubmissionSummary>> sessions_;
    std::mutex log_mutex_;
    std::ofstream log_;
};

}
