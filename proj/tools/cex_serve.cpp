#include "cex/service.hpp"

#include <httplib.h>
#include <iostream>

int main()
{
    try {
        auto config = cex::ServiceConfig::from_environment();
        cex::GradingService service(cex::load_problems(config.problems_dir), config);
        httplib::Server server;
        service.mount(server);
        std::cerr << "serving " << config.problems_dir << " on port " << config.port << ", log " << config.log_path << '\n';
        if (not server.listen("0.0.0.0", config.port)) {
            std::cerr << "cannot listen on port " << config.port << '\n';
            return 1;
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
