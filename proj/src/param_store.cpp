#include "cvqa/param_store.hpp"

#include <cstring>

#include "cvqa/errors.hpp"

namespace cvqa {

Tensor& ParamStore::add(const std::string& name, Tensor tensor) {
  if (entries_.count(name)) throw UsageError("parameter '" + name + "' already exists");
  tensor.set_requires_grad(true);
  auto [it, inserted] = entries_.emplace(name, std::move(tensor));
  order_.push_back(name);
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

bool ParamStore::has(const std::string& name) const { return entries_.count(name) > 0; }

void ParamStore::freeze(const std::string& name) {
  get(name).set_requires_grad(false);
  frozen_.insert(name);
}

void ParamStore::unfreeze(const std::string& name) {
  get(name).set_requires_grad(true);
  frozen_.erase(name);
}

void ParamStore::freeze_all_except(const std::vector<std::string>& keep) {
  for (const auto& name : order_) freeze(name);
  for (const auto& name : keep) unfreeze(name);
}

bool ParamStore::is_frozen(const std::string& name) const { return frozen_.count(name) > 0; }

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& name : order_) {
    if (!is_frozen(name)) out.push_back(name);
  }
  return out;
}

void ParamStore::zero_grad() {
  for (const auto& name : order_) entries_.at(name).zero_grad();
}

uint64_t ParamStore::value_hash(const std::vector<std::string>& names) const {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& name : names) {
    const auto& vals = get(name).values();
    const auto* bytes = reinterpret_cast<const unsigned char*>(vals.data());
    for (size_t i = 0; i < vals.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace cvqa
