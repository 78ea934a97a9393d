#pragma once

#include <spdlog/spdlog.h>

namespace biasaudit {

/// Line-oriented key=value logger writing to standard error.
spdlog::logger& log();

}  // namespace biasaudit
