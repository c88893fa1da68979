// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "dsplat/io/logging.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

namespace dsplat::io {

void
initLogging() {
    auto logger = spdlog::get("dsplat");
    if (!logger) {
        logger = spdlog::stderr_color_mt("dsplat");
    }
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char *env = std::getenv("DSPLAT_LOG")) {
        level = spdlog::level::from_str(env);
    }
    spdlog::set_level(level);
}

} // namespace dsplat::io
