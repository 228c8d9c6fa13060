#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "mapnet/common.hpp"

namespace mapnet {

// Dense row-major tensor of doubles with value semantics. Ranks 1..4 are used
// throughout: {n}, {n, d}, {H, W, C} and conv kernels {kh, kw, cin, cout}.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int size() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<size_t>(i)]; }

    double& at(int i, int j) { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    void fill(double v);
    double max_abs() const;
    bool all_finite() const;

    // Total element count implied by a shape.
    static int shape_size(const std::vector<int>& shape);

  private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace mapnet
