#include "biasaudit/executor.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace biasaudit {

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& task,
                  const std::atomic<bool>* stop) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> skipped{false};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker = [&] {
    for (;;) {
      if (stop && stop->load()) {
        if (next.load() < count) skipped = true;
        return;
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  const std::size_t n = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n);
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  if (skipped) throw Interrupted();
}

}  // namespace biasaudit
