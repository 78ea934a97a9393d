#pragma once

#include <map>
#include <memory>
#include <string>

#include "biasaudit/backend.hpp"
#include "biasaudit/cost.hpp"

namespace biasaudit {

struct BackendBinding {
  std::shared_ptr<Backend> backend;
  int max_output_tokens = 4096;
};

/// Single entry point for model calls. Fills in the backend's token budget
/// and records a ledger entry for every response received.
class ModelGateway {
 public:
  ModelGateway(std::map<std::string, BackendBinding> backends, PriceTable prices, CostLedger& ledger);

  bool has(const std::string& backend_id) const { return backends_.contains(backend_id); }
  int token_budget(const std::string& backend_id) const;

  ModelResponse call(const std::string& backend_id, ModelRequest request, Stage stage, std::string tag);

  CostLedger& ledger() { return ledger_; }

 private:
  std::map<std::string, BackendBinding> backends_;
  PriceTable prices_;
  CostLedger& ledger_;
};

}  // namespace biasaudit
