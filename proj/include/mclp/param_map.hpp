#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mclp/error.hpp"
#include "mclp/tensor.hpp"

namespace mclp {

// Ordered name -> Tensor registry. Iteration order is insertion order, which
// keeps optimizer sweeps, EMA walks, and serialization deterministic. Names
// are unique; Tensor entries are shared handles onto live parameters.
struct ParamMap {
  std::vector<std::pair<std::string, Tensor>> items;

  void insert(const std::string& name, Tensor t) {
    if (find(name) != nullptr)
      throw UsageError("ParamMap: duplicate parameter name '" + name + "'");
    items.emplace_back(name, std::move(t));
  }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  Tensor& at(const std::string& name) {
    Tensor* t = find(name);
    if (t == nullptr) throw UsageError("ParamMap: no parameter '" + name + "'");
    return *t;
  }

  std::size_t size() const { return items.size(); }

  void merge(const ParamMap& other) {
    for (const auto& [n, t] : other.items) insert(n, t);
  }

  std::int64_t total_elements() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : items) n += t.numel();
    return n;
  }
};

}  // namespace mclp
