#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cvqa/tensor.hpp"

namespace cvqa {

// Ordered map of named learnable tensors. Frozen entries keep their values
// bit-identical through backward passes and optimizer steps.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor tensor);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;

  void freeze(const std::string& name);
  void unfreeze(const std::string& name);
  // Freezes every parameter whose name is not in `keep`.
  void freeze_all_except(const std::vector<std::string>& keep);
  bool is_frozen(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::vector<std::string> trainable_names() const;
  size_t size() const { return order_.size(); }

  void zero_grad();

  // FNV-1a over the raw value bytes of the named parameters; used by the
  // freeze-invariant checks.
  uint64_t value_hash(const std::vector<std::string>& names) const;

 private:
  std::unordered_map<std::string, Tensor> entries_;
  std::vector<std::string> order_;
  std::unordered_set<std::string> frozen_;
};

}  // namespace cvqa
