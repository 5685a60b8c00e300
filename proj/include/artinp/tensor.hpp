#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

namespace artinp {

using real = double;

// Dense row-major tensor. Rank is small (<= 4 in practice); storage is
// always contiguous, shape (d0, d1, ...) with the last axis fastest.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), real(0));
    }
    Tensor(std::vector<int> shape, real fill) : Tensor(std::move(shape)) {
        for (auto& v : data_) v = fill;
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, real v) { return Tensor(std::move(shape), v); }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            assert(d >= 0);
            n *= d;
        }
        return n;
    }

    bool empty() const { return data_.empty(); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }

    real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // (h, w) on a rank-2 tensor
    real& at(int h, int w) {
        return data_[static_cast<size_t>(h) * shape_[1] + w];
    }
    real at(int h, int w) const {
        return data_[static_cast<size_t>(h) * shape_[1] + w];
    }
    // (c, h, w) on a rank-3 tensor
    real& at(int c, int h, int w) {
        return data_[(static_cast<size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }
    real at(int c, int h, int w) const {
        return data_[(static_cast<size_t>(c) * shape_[1] + h) * shape_[2] + w];
    }

    void fill(real v) {
        for (auto& x : data_) x = v;
    }
    void zero() { fill(real(0)); }

    // Reinterpret shape; element count must match.
    void reshape(std::vector<int> shape) {
        assert(count(shape) == size());
        shape_ = std::move(shape);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    std::vector<int> shape_;
    std::vector<real> data_;
};

}  // namespace artinp
