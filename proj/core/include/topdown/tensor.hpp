#pragma once

#include <memory>

#include "topdown/common.hpp"

namespace topdown {

template <typename T>
struct TensorImpl {
    Shape shape;
    AVec<T> data;
    AVec<T> grad;  // allocated on first accumulation; same length as data
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

// Value-semantic handle over shared storage: copies alias the same buffer.
// Canonical image layout is N x C x H x W, row-major.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(Shape shape, T value, bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl<T>>();
        t.impl_->shape = std::move(shape);
        t.impl_->data.assign(static_cast<size_t>(topdown::numel(t.impl_->shape)), value);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from(Shape shape, const std::vector<T>& values, bool requires_grad = false) {
        if (static_cast<int64_t>(values.size()) != topdown::numel(shape))
            fail_shape("Tensor::from", "value count " + std::to_string(values.size()) +
                                           " does not fill shape " + shape_str(shape));
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl<T>>();
        t.impl_->shape = std::move(shape);
        t.impl_->data.assign(values.begin(), values.end());
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from_aligned(Shape shape, AVec<T> values, bool requires_grad = false) {
        if (static_cast<int64_t>(values.size()) != topdown::numel(shape))
            fail_shape("Tensor::from", "value count " + std::to_string(values.size()) +
                                           " does not fill shape " + shape_str(shape));
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl<T>>();
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(values);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from({1}, {value}, requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
    int64_t dim(size_t i) const { return impl_->shape.at(i); }
    size_t rank() const { return impl_->shape.size(); }

    T* data() { return impl_->data.data(); }
    const T* data() const { return impl_->data.data(); }
    AVec<T>& vec() { return impl_->data; }
    const AVec<T>& vec() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    // Gradient access; a tensor with requires_grad=false never allocates one.
    bool has_grad() const { return !impl_->grad.empty(); }
    AVec<T>& grad() {
        if (!impl_->requires_grad)
            fail_shape("Tensor::grad", "tensor does not require grad");
        impl_->ensure_grad();
        return impl_->grad;
    }
    const AVec<T>& grad() const {
        if (!has_grad())
            fail_shape("Tensor::grad", "no gradient accumulated");
        return impl_->grad;
    }
    void zero_grad() {
        if (!impl_->grad.empty()) impl_->grad.assign(impl_->grad.size(), T(0));
    }

    T item() const {
        if (numel() != 1) fail_shape("Tensor::item", "tensor is not scalar: " + shape_str(shape()));
        return impl_->data[0];
    }

    // Deep copy (fresh storage, no grad carried over).
    Tensor clone() const {
        Tensor t = from_aligned(impl_->shape, impl_->data, impl_->requires_grad);
        return t;
    }

    std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

}  // namespace topdown
