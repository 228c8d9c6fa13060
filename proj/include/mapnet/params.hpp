#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "mapnet/autograd.hpp"

namespace mapnet {

// Named parameter tensors in registration order. Registration order is the
// deterministic order used for initialization, optimization and checkpoints.
class ParamStore {
  public:
    Tensor& create(const std::string& name, std::vector<int> shape);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return values_.count(name) != 0; }
    const std::vector<std::string>& names() const { return names_; }
    size_t size() const { return names_.size(); }

  private:
    std::vector<std::string> names_;
    std::map<std::string, Tensor> values_;
};

// Frozen buffers (batch-norm running statistics) are carried in the store and
// the checkpoints but are never trained.
bool is_trainable_param(const std::string& name);

// Per-forward bridge from stored tensors to graph leaves. Binding is cached,
// so a parameter referenced twice (the weight-shared backbone) contributes
// through a single leaf and its gradients accumulate there.
class ParamBinder {
  public:
    ParamBinder(const ParamStore& store, bool trainable)
        : store_(&store), trainable_(trainable) {}

    Var operator()(const std::string& name);

    // Gradient of a bound parameter; zeros if it never entered the graph.
    Tensor grad_or_zero(const std::string& name) const;

  private:
    const ParamStore* store_;
    bool trainable_;
    std::unordered_map<std::string, Var> cache_;
};

}  // namespace mapnet
