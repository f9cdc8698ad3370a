#pragma once
// Parameter checkpoints: flat binary blob (<path>.bin) plus JSON manifest
// (<path>.json) mapping tensor name -> shape, dtype and byte offset.

#include <string>
#include <vector>

#include "vemfuse/tensor.hpp"

namespace vemfuse {

void save_checkpoint_f32(const std::string& path_prefix,
                         const std::vector<Parameter<float>*>& params);
void save_checkpoint_f64(const std::string& path_prefix,
                         const std::vector<Parameter<double>*>& params);

// Loads values into the given parameters; shapes and names must match the
// manifest exactly. Throws on any mismatch or missing file.
void load_checkpoint_f32(const std::string& path_prefix,
                         const std::vector<Parameter<float>*>& params);
void load_checkpoint_f64(const std::string& path_prefix,
                         const std::vector<Parameter<double>*>& params);

bool checkpoint_exists(const std::string& path_prefix);

}  // namespace vemfuse
