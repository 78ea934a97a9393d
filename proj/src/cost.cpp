#include "biasaudit/cost.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace biasaudit {

using json = nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Screening:
      return "screening";
    case Stage::Jury:
      return "jury";
    case Stage::Meta:
      return "meta";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (auto stage : {Stage::Screening, Stage::Jury, Stage::Meta}) {
    if (to_string(stage) == s) return stage;
  }
  return std::nullopt;
}

Price Price::from_usd_per_million(double input_usd, double output_usd) {
  if (!(input_usd >= 0) || !(output_usd >= 0)) throw std::invalid_argument("prices must be non-negative");
  return {std::llround(input_usd * kNanoPerDollar), std::llround(output_usd * kNanoPerDollar)};
}

__extension__ using Wide = __int128;

std::int64_t token_cost_nanousd(std::int64_t tokens, std::int64_t nano_per_million) {
  const Wide product = static_cast<Wide>(tokens) * nano_per_million;
  return static_cast<std::int64_t>((product + 500'000) / 1'000'000);
}

CostEntry record_cost(const ModelResponse& response, Stage stage, const std::string& backend_id,
                      const PriceTable& prices, std::string tag) {
  auto it = prices.find(backend_id);
  if (it == prices.end()) throw UnknownBackendPrice(backend_id);
  if (response.input_tokens < 0 || response.output_tokens < 0) {
    throw std::invalid_argument("token counts must be non-negative");
  }
  const auto& price = it->second;
  return {backend_id,
          stage,
          std::move(tag),
          response.input_tokens,
          response.output_tokens,
          token_cost_nanousd(response.input_tokens, price.input_nano_per_million) +
              token_cost_nanousd(response.output_tokens, price.output_nano_per_million)};
}

CostLedger::CostLedger(const CostLedger& other) : entries_(other.entries()) {}

CostLedger& CostLedger::operator=(const CostLedger& other) {
  if (this != &other) {
    auto copy = other.entries();
    std::lock_guard lock(mu_);
    entries_ = std::move(copy);
  }
  return *this;
}

void CostLedger::append(CostEntry entry) {
  std::lock_guard lock(mu_);
  entries_.push_back(std::move(entry));
}

std::vector<CostEntry> CostLedger::entries() const {
  std::vector<CostEntry> copy;
  {
    std::lock_guard lock(mu_);
    copy = entries_;
  }
  std::sort(copy.begin(), copy.end(), [](const CostEntry& a, const CostEntry& b) {
    return std::tie(a.stage, a.tag, a.backend_id) < std::tie(b.stage, b.tag, b.backend_id);
  });
  return copy;
}

std::int64_t CostLedger::total_nanousd() const {
  std::lock_guard lock(mu_);
  std::int64_t total = 0;
  for (const auto& e : entries_) total += e.cost_nanousd;
  return total;
}

std::array<std::int64_t, 3> CostLedger::stage_totals_nanousd() const {
  std::lock_guard lock(mu_);
  std::array<std::int64_t, 3> totals{};
  for (const auto& e : entries_) totals[static_cast<std::size_t>(e.stage)] += e.cost_nanousd;
  return totals;
}

void CostLedger::drop_stage(Stage stage) {
  std::lock_guard lock(mu_);
  std::erase_if(entries_, [stage](const CostEntry& e) { return e.stage == stage; });
}

json ledger_to_json(const CostLedger& ledger) {
  json entries = json::array();
  for (const auto& e : ledger.entries()) {
    entries.push_back({{"backend_id", e.backend_id},
                       {"stage", std::string(to_string(e.stage))},
                       {"tag", e.tag},
                       {"input_tokens", e.input_tokens},
                       {"output_tokens", e.output_tokens},
                       {"cost_nanousd", e.cost_nanousd}});
  }
  const auto totals = ledger.stage_totals_nanousd();
  return {{"schema_version", 1},
          {"kind", "ledger"},
          {"entries", entries},
          {"stage_totals_nanousd",
           {{"screening", totals[0]}, {"jury", totals[1]}, {"meta", totals[2]}}},
          {"total_nanousd", ledger.total_nanousd()}};
}

CostLedger ledger_from_json(const json& doc) {
  CostLedger ledger;
  for (const auto& e : doc.at("entries")) {
    auto stage = parse_stage(e.at("stage").get<std::string>());
    if (!stage) throw std::invalid_argument("unknown ledger stage " + e.at("stage").get<std::string>());
    ledger.append({e.at("backend_id").get<std::string>(), *stage, e.at("tag").get<std::string>(),
                   e.at("input_tokens").get<std::int64_t>(), e.at("output_tokens").get<std::int64_t>(),
                   e.at("cost_nanousd").get<std::int64_t>()});
  }
  return ledger;
}

}  // namespace biasaudit
