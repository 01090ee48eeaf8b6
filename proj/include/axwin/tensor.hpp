#pragma once

#include <memory>
#include <span>
#include <vector>

#include "axwin/common.hpp"
#include "axwin/rng.hpp"

namespace axwin {

// Dense rank-4 tensor, (n, h, w, c) row-major, f32 or f64. Storage is
// shared between copies; mutation goes through mutable_data(), which
// unshares first. Code that fills a freshly allocated tensor therefore
// never copies, while tapes and checkpoints can hold cheap snapshots.
class Tensor {
  public:
    Tensor() : Tensor(Shape{1, 1, 1, 1}, Dtype::F32) {}
    Tensor(Shape shape, Dtype dtype);

    static Tensor zeros(Shape shape, Dtype dtype) { return Tensor(shape, dtype); }
    static Tensor full(Shape shape, Dtype dtype, double value);
    static Tensor from_values(Shape shape, Dtype dtype, const std::vector<double>& values);
    static Tensor random_normal(Shape shape, Dtype dtype, Rng& rng);
    static Tensor random_uniform(Shape shape, Dtype dtype, Rng& rng, double lo, double hi);
    static Tensor truncated_normal(Shape shape, Dtype dtype, Rng& rng, double std_dev);

    const Shape& shape() const { return shape_; }
    Dtype dtype() const { return dtype_; }
    std::int64_t numel() const { return shape_.numel(); }

    template <typename T>
    std::span<const T> data() const;
    template <typename T>
    std::span<T> mutable_data();

    // Dtype-agnostic element access; slow path for tests, IO and setup.
    double get(std::int64_t flat) const;
    double get(std::int64_t in, std::int64_t ih, std::int64_t iw, std::int64_t ic) const {
        return get(shape_.index(in, ih, iw, ic));
    }
    void set(std::int64_t flat, double value);
    void set(std::int64_t in, std::int64_t ih, std::int64_t iw, std::int64_t ic, double value) {
        set(shape_.index(in, ih, iw, ic), value);
    }

    Tensor cast(Dtype target) const;
    // Same storage reinterpreted with new extents (numel must match).
    Tensor reshaped(Shape to) const;
    Tensor clone() const;

    bool same_bits(const Tensor& other) const;
    bool all_finite() const;
    double max_abs() const;

  private:
    Shape shape_;
    Dtype dtype_;
    std::shared_ptr<std::vector<float>> f32_;
    std::shared_ptr<std::vector<double>> f64_;

    void unshare();
};

template <>
inline std::span<const float> Tensor::data<float>() const {
    return {f32_->data(), f32_->size()};
}
template <>
inline std::span<const double> Tensor::data<double>() const {
    return {f64_->data(), f64_->size()};
}
template <>
inline std::span<float> Tensor::mutable_data<float>() {
    unshare();
    return {f32_->data(), f32_->size()};
}
template <>
inline std::span<double> Tensor::mutable_data<double>() {
    unshare();
    return {f64_->data(), f64_->size()};
}

// Throws NumericError when any element is NaN/Inf; `what` names the
// producing operation.
void ensure_finite(const Tensor& t, const char* what);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace axwin
