#include "mapnet/params.hpp"

namespace mapnet {

Tensor& ParamStore::create(const std::string& name, std::vector<int> shape) {
    MAPNET_REQUIRE(!values_.count(name), "ParamStore: duplicate parameter " + name);
    names_.push_back(name);
    return values_.emplace(name, Tensor(std::move(shape))).first->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = values_.find(name);
    MAPNET_REQUIRE(it != values_.end(), "ParamStore: unknown parameter " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = values_.find(name);
    MAPNET_REQUIRE(it != values_.end(), "ParamStore: unknown parameter " + name);
    return it->second;
}

bool is_trainable_param(const std::string& name) {
    const auto ends_with = [&](const char* suffix) {
        const size_t len = std::char_traits<char>::length(suffix);
        return name.size() >= len && name.compare(name.size() - len, len, suffix) == 0;
    };
    return !ends_with(".rm") && !ends_with(".rv");
}

Var ParamBinder::operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    Var v = Var::leaf(store_->get(name), trainable_ && is_trainable_param(name));
    cache_.emplace(name, v);
    return v;
}

Tensor ParamBinder::grad_or_zero(const std::string& name) const {
    auto it = cache_.find(name);
    if (it == cache_.end() || it->second.grad().empty())
        return Tensor(store_->get(name).shape());
    return it->second.grad();
}

}  // namespace mapnet
