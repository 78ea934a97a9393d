/// @file cost.hpp
/// @brief Per-call cost accounting. Amounts are held as integer nano-dollars
/// so ledger sums are exact.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasaudit/backend.hpp"

namespace biasaudit {

enum class Stage { Screening, Jury, Meta };

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

inline constexpr std::int64_t kNanoPerDollar = 1'000'000'000;

/// USD per million tokens, stored as nano-dollars per million tokens.
struct Price {
  std::int64_t input_nano_per_million = 0;
  std::int64_t output_nano_per_million = 0;

  static Price from_usd_per_million(double input_usd, double output_usd);
};

class UnknownBackendPrice : public std::out_of_range {
 public:
  explicit UnknownBackendPrice(const std::string& backend_id)
      : std::out_of_range("no price configured for backend '" + backend_id + "'") {}
};

using PriceTable = std::map<std::string, Price>;

struct CostEntry {
  std::string backend_id;
  Stage stage = Stage::Screening;
  /// Identifies the call site (excerpt, juror, attempt); gives the ledger a
  /// stable order independent of completion order.
  std::string tag;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t cost_nanousd = 0;

  double cost_usd() const { return static_cast<double>(cost_nanousd) / kNanoPerDollar; }
  bool operator==(const CostEntry&) const = default;
};

/// tokens x price, rounded half-up to the nearest nano-dollar.
std::int64_t token_cost_nanousd(std::int64_t tokens, std::int64_t nano_per_million);

CostEntry record_cost(const ModelResponse& response, Stage stage, const std::string& backend_id,
                      const PriceTable& prices, std::string tag = {});

/// Append-only and safe for concurrent appends. Entry order is not
/// significant; `entries()` returns them sorted by (stage, tag, backend).
class CostLedger {
 public:
  CostLedger() = default;
  CostLedger(const CostLedger& other);
  CostLedger& operator=(const CostLedger& other);

  void append(CostEntry entry);
  std::vector<CostEntry> entries() const;
  std::int64_t total_nanousd() const;
  std::array<std::int64_t, 3> stage_totals_nanousd() const;
  /// Removes every entry of `stage` (used when a stage is recomputed).
  void drop_stage(Stage stage);

 private:
  mutable std::mutex mu_;
  std::vector<CostEntry> entries_;
};

nlohmann::json ledger_to_json(const CostLedger& ledger);
CostLedger ledger_from_json(const nlohmann::json& doc);

}  // namespace biasaudit
