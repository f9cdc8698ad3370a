#include "vemfuse/losses.hpp"

#include <json.hpp>

namespace vemfuse {

FusionConfig fusion_config_from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  FusionConfig c;
  auto get = [&j](const char* key, double dflt) { return j.value(key, dflt); };
  c.alpha_t = get("alpha_t", c.alpha_t);
  c.alpha_s = get("alpha_s", c.alpha_s);
  c.beta_t = get("beta_t", c.beta_t);
  c.beta_s = get("beta_s", c.beta_s);
  c.tx_vem_s = get("tx_vem_s", c.tx_vem_s);
  c.tx_vem_t = get("tx_vem_t", c.tx_vem_t);
  c.st_vem_s = get("st_vem_s", c.st_vem_s);
  c.st_vem_t = get("st_vem_t", c.st_vem_t);
  c.tx_ml_s = get("tx_ml_s", c.tx_ml_s);
  c.tx_ml_t = get("tx_ml_t", c.tx_ml_t);
  c.st_ml_s = get("st_ml_s", c.st_ml_s);
  c.st_ml_t = get("st_ml_t", c.st_ml_t);
  c.n_queries = j.value("N", c.n_queries);
  c.m_neighbors = j.value("M", c.m_neighbors);
  c.label_smoothing = get("label_smoothing", c.label_smoothing);
  c.t2_grad_rescale = j.value("t2_grad_rescale", c.t2_grad_rescale);
  c.label_sample_temperature = get("label_sample_temperature", c.label_sample_temperature);
  c.validate();
  return c;
}

std::string fusion_config_to_json_text(const FusionConfig& c) {
  nlohmann::ordered_json j;
  j["alpha_t"] = c.alpha_t;
  j["alpha_s"] = c.alpha_s;
  j["beta_t"] = c.beta_t;
  j["beta_s"] = c.beta_s;
  j["tx_vem_s"] = c.tx_vem_s;
  j["tx_vem_t"] = c.tx_vem_t;
  j["st_vem_s"] = c.st_vem_s;
  j["st_vem_t"] = c.st_vem_t;
  j["tx_ml_s"] = c.tx_ml_s;
  j["tx_ml_t"] = c.tx_ml_t;
  j["st_ml_s"] = c.st_ml_s;
  j["st_ml_t"] = c.st_ml_t;
  j["N"] = c.n_queries;
  j["M"] = c.m_neighbors;
  j["label_smoothing"] = c.label_smoothing;
  j["t2_grad_rescale"] = c.t2_grad_rescale;
  j["label_sample_temperature"] = c.label_sample_temperature;
  return j.dump(2);
}

}  // namespace vemfuse
