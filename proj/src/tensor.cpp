#include "mapnet/tensor.hpp"

#include <cmath>

namespace mapnet {

int Tensor::shape_size(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) {
        MAPNET_REQUIRE(d >= 1, "tensor dimensions must be >= 1");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_size(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)) {
    MAPNET_REQUIRE(static_cast<size_t>(shape_size(shape_)) == values.size(),
                   "tensor shape/value count mismatch");
    data_ = std::move(values);
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::fabs(x));
    return m;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace mapnet
