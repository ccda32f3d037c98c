#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cvqa/param_store.hpp"
#include "cvqa/tensor.hpp"

namespace cvqa {

// CVQA tensor container: magic "CVQA", u32 LE version (1), u64 LE entry
// count; per entry u32 LE name length + UTF-8 name, u32 LE rank, u64 LE dims,
// row-major f32 LE data. Used for checkpoints and object-feature files.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_tensor_file(const std::string& path);

void save_checkpoint(const std::string& path, const ParamStore& params);
// Copies values into existing parameters; shapes must match exactly.
void load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace cvqa
