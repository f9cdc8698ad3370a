#include "vemfuse/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace vemfuse {

namespace {

template <typename S>
void save_impl(const std::string& prefix, const std::vector<Parameter<S>*>& params,
               const char* dtype) {
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write checkpoint blob: " + prefix + ".bin");
  nlohmann::ordered_json manifest;
  manifest["dtype"] = dtype;
  nlohmann::ordered_json tensors;
  uint64_t offset = 0;
  for (const Parameter<S>* p : params) {
    nlohmann::ordered_json entry;
    entry["shape"] = p->value.shape;
    entry["offset"] = offset;
    entry["count"] = p->value.data.size();
    tensors[p->name] = entry;
    bin.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.data.size() * sizeof(S)));
    offset += p->value.data.size() * sizeof(S);
  }
  manifest["tensors"] = tensors;
  std::ofstream mf(prefix + ".json");
  if (!mf) throw std::runtime_error("cannot write checkpoint manifest: " + prefix + ".json");
  mf << manifest.dump(2) << '\n';
}

template <typename S>
void load_impl(const std::string& prefix, const std::vector<Parameter<S>*>& params,
               const char* dtype) {
  std::ifstream mf(prefix + ".json");
  if (!mf) throw std::runtime_error("checkpoint manifest not found: " + prefix + ".json");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  if (manifest.value("dtype", "") != dtype)
    throw std::runtime_error("checkpoint dtype mismatch in " + prefix);
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint blob not found: " + prefix + ".bin");
  const auto& tensors = manifest.at("tensors");
  for (Parameter<S>* p : params) {
    if (!tensors.contains(p->name))
      throw std::runtime_error("checkpoint missing tensor: " + p->name);
    const auto& entry = tensors.at(p->name);
    const std::vector<int64_t> shape = entry.at("shape").template get<std::vector<int64_t>>();
    if (shape != p->value.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + p->name);
    bin.seekg(static_cast<std::streamoff>(entry.at("offset").template get<uint64_t>()));
    bin.read(reinterpret_cast<char*>(p->value.data.data()),
             static_cast<std::streamsize>(p->value.data.size() * sizeof(S)));
    if (!bin) throw std::runtime_error("checkpoint blob truncated for " + p->name);
  }
}

}  // namespace

void save_checkpoint_f32(const std::string& prefix, const std::vector<Parameter<float>*>& params) {
  save_impl(prefix, params, "float32");
}
void save_checkpoint_f64(const std::string& prefix, const std::vector<Parameter<double>*>& params) {
  save_impl(prefix, params, "float64");
}
void load_checkpoint_f32(const std::string& prefix, const std::vector<Parameter<float>*>& params) {
  load_impl(prefix, params, "float32");
}
void load_checkpoint_f64(const std::string& prefix, const std::vector<Parameter<double>*>& params) {
  load_impl(prefix, params, "float64");
}

bool checkpoint_exists(const std::string& prefix) {
  return std::filesystem::exists(prefix + ".json") && std::filesystem::exists(prefix + ".bin");
}

}  // namespace vemfuse
