#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tabcsdi/common.hpp"
#include "tabcsdi/rng.hpp"

namespace tabcsdi {

namespace detail {

// std::vector value-initializes on resize; this allocator default-initializes
// instead so op outputs that are fully overwritten skip the memset.
template <class T>
struct uninit_allocator : std::allocator<T> {
    template <class U>
    struct rebind {
        using other = uninit_allocator<U>;
    };
    template <class U>
    void construct(U* p) noexcept {
        ::new (static_cast<void*>(p)) U;
    }
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

} // namespace detail

using real_vec = std::vector<real_t, detail::uninit_allocator<real_t>>;

// Dense row-major tensor. Shapes are fixed after construction; all dimension
// sizes are >= 1 and product(shape) == data.size(). Plain construction
// zero-fills; uninit() skips the fill for buffers every op writes fully.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.resize(static_cast<size_t>(check_shape(shape_)));
        std::fill(data_.begin(), data_.end(), real_t(0));
    }

    Tensor(std::vector<int> shape, real_vec data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (check_shape(shape_) != static_cast<int64_t>(data_.size()))
            fail("tensor: shape ", shape_str(shape_), " does not match data length ", data_.size());
    }

    Tensor(std::vector<int> shape, std::initializer_list<real_t> data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (check_shape(shape_) != static_cast<int64_t>(data_.size()))
            fail("tensor: shape ", shape_str(shape_), " does not match data length ", data_.size());
    }

    static Tensor uninit(std::vector<int> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_.resize(static_cast<size_t>(check_shape(t.shape_)));
        return t;
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, real_t v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor scalar(real_t v) { return Tensor({1}, {v}); }

    static Tensor randn(std::vector<int> shape, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<real_t>(rng.normal());
        return t;
    }

    // uniform in [lo, hi)
    static Tensor rand_uniform(std::vector<int> shape, Rng& rng, double lo, double hi) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<real_t>(lo + (hi - lo) * rng.uniform());
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    real_t* data() { return data_.data(); }
    const real_t* data() const { return data_.data(); }
    real_vec& vec() { return data_; }
    const real_vec& vec() const { return data_; }

    real_t& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    real_t operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    real_t& at(int i, int j) { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    const real_t& at(int i, int j) const { return data_[static_cast<size_t>(i) * dim(1) + j]; }

    real_t& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    const real_t& at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    bool all_finite() const {
        for (real_t v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    static int64_t check_shape(const std::vector<int>& shape) {
        if (shape.empty()) fail("tensor: empty shape");
        int64_t n = 1;
        for (int d : shape) {
            if (d < 1) fail("tensor: invalid dimension in shape ", shape_str(shape));
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    real_vec data_;
};

} // namespace tabcsdi
