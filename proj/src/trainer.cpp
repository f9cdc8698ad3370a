#include "vemfuse/trainer.hpp"

#include <json.hpp>

namespace vemfuse {

TrainConfig train_config_from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TrainConfig c;
  c.lr_struct = j.value("lr_struct", c.lr_struct);
  c.lr_text = j.value("lr_text", c.lr_text);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
  c.fusion_epochs = j.value("fusion_epochs", c.fusion_epochs);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.dev_subsample = j.value("dev_subsample", c.dev_subsample);
  c.validate();
  return c;
}

std::string train_config_to_json_text(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["lr_struct"] = c.lr_struct;
  j["lr_text"] = c.lr_text;
  j["batch_size"] = c.batch_size;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["fusion_epochs"] = c.fusion_epochs;
  j["grad_clip"] = c.grad_clip;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["dev_subsample"] = c.dev_subsample;
  return j.dump(2);
}

std::string runlog_to_jsonl(const RunLog& log) {
  std::string out;
  for (const EpochRecord& r : log.records) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    nlohmann::ordered_json losses;
    for (const auto& [k, v] : r.losses) losses[k] = v;
    j["losses"] = losses;
    if (r.dev_mrr_struct >= 0.0) j["dev_mrr_struct"] = r.dev_mrr_struct;
    if (r.dev_mrr_text >= 0.0) j["dev_mrr_text"] = r.dev_mrr_text;
    j["overlay_edges"] = r.overlay_edges;
    j["wall_clock_s"] = r.wall_clock_s;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace vemfuse
