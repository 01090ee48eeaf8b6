#include "axwin/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace axwin {

Tensor::Tensor(Shape shape, Dtype dtype) : shape_(shape), dtype_(dtype) {
    if (shape.n < 1 || shape.h < 1 || shape.w < 1 || shape.c < 1) {
        throw DimensionError("tensor extents must all be >= 1, got " + shape.str());
    }
    const auto count = static_cast<std::size_t>(shape.numel());
    if (dtype_ == Dtype::F32) {
        f32_ = std::make_shared<std::vector<float>>(count, 0.0f);
    } else {
        f64_ = std::make_shared<std::vector<double>>(count, 0.0);
    }
}

void Tensor::unshare() {
    if (dtype_ == Dtype::F32) {
        if (f32_.use_count() > 1) f32_ = std::make_shared<std::vector<float>>(*f32_);
    } else {
        if (f64_.use_count() > 1) f64_ = std::make_shared<std::vector<double>>(*f64_);
    }
}

Tensor Tensor::full(Shape shape, Dtype dtype, double value) {
    Tensor t(shape, dtype);
    if (dtype == Dtype::F32) {
        std::fill(t.f32_->begin(), t.f32_->end(), static_cast<float>(value));
    } else {
        std::fill(t.f64_->begin(), t.f64_->end(), value);
    }
    return t;
}

Tensor Tensor::from_values(Shape shape, Dtype dtype, const std::vector<double>& values) {
    Tensor t(shape, dtype);
    if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
        throw DimensionError("from_values: got " + std::to_string(values.size()) +
                             " values for shape " + shape.str());
    }
    for (std::size_t i = 0; i < values.size(); ++i) t.set(static_cast<std::int64_t>(i), values[i]);
    return t;
}

Tensor Tensor::random_normal(Shape shape, Dtype dtype, Rng& rng) {
    Tensor t(shape, dtype);
    const std::int64_t count = shape.numel();
    for (std::int64_t i = 0; i < count; ++i) t.set(i, rng.normal());
    return t;
}

Tensor Tensor::random_uniform(Shape shape, Dtype dtype, Rng& rng, double lo, double hi) {
    Tensor t(shape, dtype);
    const std::int64_t count = shape.numel();
    for (std::int64_t i = 0; i < count; ++i) t.set(i, rng.uniform(lo, hi));
    return t;
}

Tensor Tensor::truncated_normal(Shape shape, Dtype dtype, Rng& rng, double std_dev) {
    Tensor t(shape, dtype);
    const std::int64_t count = shape.numel();
    for (std::int64_t i = 0; i < count; ++i) t.set(i, rng.truncated_normal(std_dev));
    return t;
}

double Tensor::get(std::int64_t flat) const {
    return dtype_ == Dtype::F32 ? static_cast<double>((*f32_)[static_cast<std::size_t>(flat)])
                                : (*f64_)[static_cast<std::size_t>(flat)];
}

void Tensor::set(std::int64_t flat, double value) {
    unshare();
    if (dtype_ == Dtype::F32) {
        (*f32_)[static_cast<std::size_t>(flat)] = static_cast<float>(value);
    } else {
        (*f64_)[static_cast<std::size_t>(flat)] = value;
    }
}

Tensor Tensor::cast(Dtype target) const {
    if (target == dtype_) return *this;
    Tensor out(shape_, target);
    const std::int64_t count = numel();
    for (std::int64_t i = 0; i < count; ++i) out.set(i, get(i));
    return out;
}

Tensor Tensor::reshaped(Shape to) const {
    if (to.numel() != numel()) {
        throw DimensionError("reshape " + shape_.str() + " -> " + to.str() +
                             ": element count mismatch");
    }
    Tensor out = *this;  // shares storage
    out.shape_ = to;
    return out;
}

Tensor Tensor::clone() const {
    Tensor out = *this;
    out.unshare();
    // unshare() is a no-op when use_count is 1; force a real copy.
    if (dtype_ == Dtype::F32) {
        if (out.f32_ == f32_) out.f32_ = std::make_shared<std::vector<float>>(*f32_);
    } else {
        if (out.f64_ == f64_) out.f64_ = std::make_shared<std::vector<double>>(*f64_);
    }
    return out;
}

bool Tensor::same_bits(const Tensor& other) const {
    if (!(shape_ == other.shape_) || dtype_ != other.dtype_) return false;
    if (dtype_ == Dtype::F32) {
        return std::memcmp(f32_->data(), other.f32_->data(), f32_->size() * sizeof(float)) == 0;
    }
    return std::memcmp(f64_->data(), other.f64_->data(), f64_->size() * sizeof(double)) == 0;
}

bool Tensor::all_finite() const {
    const std::int64_t count = numel();
    if (dtype_ == Dtype::F32) {
        const auto s = data<float>();
        for (std::int64_t i = 0; i < count; ++i) {
            if (!std::isfinite(s[static_cast<std::size_t>(i)])) return false;
        }
    } else {
        const auto s = data<double>();
        for (std::int64_t i = 0; i < count; ++i) {
            if (!std::isfinite(s[static_cast<std::size_t>(i)])) return false;
        }
    }
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    const std::int64_t count = numel();
    for (std::int64_t i = 0; i < count; ++i) m = std::max(m, std::fabs(get(i)));
    return m;
}

void ensure_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) {
        throw NumericError(std::string(what) + " produced a non-finite value");
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) {
        throw DimensionError("max_abs_diff: shape mismatch " + a.shape().str() + " vs " +
                             b.shape().str());
    }
    double m = 0.0;
    const std::int64_t count = a.numel();
    for (std::int64_t i = 0; i < count; ++i) m = std::max(m, std::fabs(a.get(i) - b.get(i)));
    return m;
}

}  // namespace axwin
