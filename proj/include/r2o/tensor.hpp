#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <vector>

namespace r2o {

// Dense row-major double tensor, rank 1..4. Thin wrapper over a flat
// vector; hot loops take data() and index by hand.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (int d : shape_) {
            assert(d >= 0);
            n *= static_cast<std::size_t>(d);
        }
        v_.assign(n, 0.0);
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    void fill(double x) { std::fill(v_.begin(), v_.end(), x); }
    void zero() { fill(0.0); }

    double& operator()(int a) { return v_[idx1(a)]; }
    double operator()(int a) const { return v_[idx1(a)]; }
    double& operator()(int a, int b) { return v_[idx2(a, b)]; }
    double operator()(int a, int b) const { return v_[idx2(a, b)]; }
    double& operator()(int a, int b, int c) { return v_[idx3(a, b, c)]; }
    double operator()(int a, int b, int c) const { return v_[idx3(a, b, c)]; }
    double& operator()(int a, int b, int c, int d) { return v_[idx4(a, b, c, d)]; }
    double operator()(int a, int b, int c, int d) const { return v_[idx4(a, b, c, d)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    std::size_t idx1(int a) const {
        assert(rank() == 1);
        return static_cast<std::size_t>(a);
    }
    std::size_t idx2(int a, int b) const {
        assert(rank() == 2);
        return static_cast<std::size_t>(a) * shape_[1] + b;
    }
    std::size_t idx3(int a, int b, int c) const {
        assert(rank() == 3);
        return (static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c;
    }
    std::size_t idx4(int a, int b, int c, int d) const {
        assert(rank() == 4);
        return ((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
    }

    std::vector<int> shape_;
    std::vector<double> v_;
};

}  // namespace r2o
