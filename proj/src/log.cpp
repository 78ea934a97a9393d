#include "biasaudit/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

namespace biasaudit {

spdlog::logger& log() {
  static auto logger = [] {
    auto l = spdlog::stderr_logger_mt("biasaudit");
    l->set_pattern("%Y-%m-%dT%H:%M:%S.%e level=%l %v");
    l->set_level(spdlog::level::info);
    return l;
  }();
  return *logger;
}

}  // namespace biasaudit
