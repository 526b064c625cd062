#pragma once

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <memory>
#include <string>

namespace msp {

/// Process-wide stderr logger; MSP_LOG={error,info,debug} sets the level
/// (default info).
inline spdlog::logger& log() {
    static const std::shared_ptr<spdlog::logger> logger = [] {
        auto l = std::make_shared<spdlog::logger>("msp", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("[%l] %v");
        const char* env = std::getenv("MSP_LOG");
        const std::string level = env ? env : "info";
        l->set_level(level == "debug" ? spdlog::level::debug
                     : level == "error" ? spdlog::level::err
                                        : spdlog::level::info);
        return l;
    }();
    return *logger;
}

}  // namespace msp
