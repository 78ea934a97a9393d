#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <stdexcept>

namespace biasaudit {

class Interrupted : public std::runtime_error {
 public:
  Interrupted() : std::runtime_error("interrupted before all work was dispatched") {}
};

/// Runs task(0..count-1) on up to `workers` threads. Once `stop` is raised no
/// new task starts; in-flight tasks finish, then Interrupted is thrown. The
/// first exception escaping a task is rethrown after all workers join.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& task,
                  const std::atomic<bool>* stop = nullptr);

}  // namespace biasaudit
