#include "rfat/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace rfat {

void init_logging() {
    static bool done = false;
    if (!done) {
        spdlog::set_default_logger(spdlog::stderr_logger_mt("rfat"));
        spdlog::set_pattern("[%l] %v");
        done = true;
    }
    const char* env = std::getenv("RFAT_LOG");
    spdlog::set_level(env != nullptr ? spdlog::level::from_str(env) : spdlog::level::warn);
}

}  // namespace rfat
