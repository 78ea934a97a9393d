#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "biasaudit/backend.hpp"

namespace biasaudit {

template <class T>
struct RetryOutcome {
  std::optional<T> value;
  int attempts_used = 0;
  /// Last schema error, or the backend error message when the call failed.
  std::string last_error;
  std::optional<BackendError> backend_error;
  std::vector<std::string> raw_responses;

  bool discarded() const { return !value.has_value(); }
};

/// Calls `invoke(attempt, corrective)` until `parse(text)` yields a value or
/// `max_attempts` replies have been rejected. `corrective` is empty on the
/// first attempt and describes the previous schema error afterwards.
/// `parse` returns std::variant<T, std::string>, the string being the error.
/// A BackendError ends the loop immediately; transport retries happen below
/// this layer.
template <class T, class Invoke, class Parse>
RetryOutcome<T> retry_schema(Invoke&& invoke, Parse&& parse, int max_attempts) {
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  RetryOutcome<T> outcome;
  std::string corrective;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    outcome.attempts_used = attempt;
    std::string text;
    try {
      text = invoke(attempt, corrective);
    } catch (const BackendError& e) {
      outcome.backend_error = e;
      outcome.last_error = e.what();
      return outcome;
    }
    outcome.raw_responses.push_back(text);
    auto parsed = parse(text);
    if (auto* value = std::get_if<T>(&parsed)) {
      outcome.value = std::move(*value);
      outcome.last_error.clear();
      return outcome;
    }
    outcome.last_error = std::get<std::string>(parsed);
    corrective = outcome.last_error;
  }
  return outcome;
}

}  // namespace biasaudit
