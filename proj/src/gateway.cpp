#include "biasaudit/gateway.hpp"

#include "biasaudit/log.hpp"

namespace biasaudit {

ModelGateway::ModelGateway(std::map<std::string, BackendBinding> backends, PriceTable prices, CostLedger& ledger)
    : backends_(std::move(backends)), prices_(std::move(prices)), ledger_(ledger) {
  for (const auto& [id, binding] : backends_) {
    if (!binding.backend) throw std::invalid_argument("backend '" + id + "' is null");
    if (binding.max_output_tokens <= 0) throw std::invalid_argument("backend '" + id + "' needs a positive token budget");
    if (!prices_.contains(id)) throw UnknownBackendPrice(id);
  }
}

int ModelGateway::token_budget(const std::string& backend_id) const {
  auto it = backends_.find(backend_id);
  if (it == backends_.end()) throw std::out_of_range("unknown backend '" + backend_id + "'");
  return it->second.max_output_tokens;
}

ModelResponse ModelGateway::call(const std::string& backend_id, ModelRequest request, Stage stage, std::string tag) {
  auto it = backends_.find(backend_id);
  if (it == backends_.end()) throw std::out_of_range("unknown backend '" + backend_id + "'");
  request.backend_id = backend_id;
  request.max_output_tokens = it->second.max_output_tokens;
  auto response = it->second.backend->complete(request);
  ledger_.append(record_cost(response, stage, backend_id, prices_, tag));
  log().debug("event=model_call stage={} backend={} tag={} in={} out={} latency_ms={}", to_string(stage),
              backend_id, tag, response.input_tokens, response.output_tokens, response.latency_ms);
  return response;
}

}  // namespace biasaudit
