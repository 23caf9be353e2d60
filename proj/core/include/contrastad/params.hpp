#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "contrastad/graph.hpp"
#include "contrastad/rng.hpp"
#include "contrastad/tensor.hpp"

namespace contrastad::model {

// Ordered, named master copies of every learnable tensor. Insertion order is
// the initialization and serialization order, so runs are seed-reproducible.
class ParamSet {
   public:
    struct Item {
        std::string name;
        diff::Tensor tensor;
        std::size_t fan_in;  // 0: initialize to zero (biases)
    };

    diff::Tensor& add(std::string name, std::vector<std::size_t> shape, std::size_t fan_in) {
        if (index_.count(name)) throw std::logic_error("duplicate parameter: " + name);
        index_[name] = items_.size();
        items_.push_back({std::move(name), diff::Tensor::zeros(std::move(shape), true), fan_in});
        return items_.back().tensor;
    }

    diff::Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
        return items_[it->second].tensor;
    }
    const diff::Tensor& at(const std::string& name) const {
        return const_cast<ParamSet*>(this)->at(name);
    }

    std::vector<Item>& items() { return items_; }
    const std::vector<Item>& items() const { return items_; }
    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& it : items_) n += it.tensor.numel();
        return n;
    }

    // uniform in +-1/sqrt(fan_in); fan_in 0 stays zero
    void init(Rng& rng) {
        for (auto& it : items_) {
            if (it.fan_in == 0) continue;
            double bound = 1.0 / std::sqrt(static_cast<double>(it.fan_in));
            for (double& v : it.tensor.values) v = rng.uniform(-bound, bound);
        }
    }

   private:
    std::vector<Item> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// name -> leaf NodeId after binding a ParamSet into a graph
struct BoundParams {
    std::unordered_map<std::string, diff::NodeId> ids;
    diff::NodeId at(const std::string& name) const {
        auto it = ids.find(name);
        if (it == ids.end()) throw std::logic_error("unbound parameter: " + name);
        return it->second;
    }
};

inline BoundParams bind_params(diff::Graph& g, const ParamSet& ps) {
    BoundParams bound;
    for (const auto& item : ps.items()) bound.ids[item.name] = g.leaf(item.tensor, item.name);
    return bound;
}

}  // namespace contrastad::model
