#pragma once

#include <cstdint>
#include <vector>

#include "axwin/tensor.hpp"

namespace axwin {

// Multiply-accumulate accounting. Forward kernels add to a thread-local
// counter while a Scope is active; the analytic cost model in analysis.cpp
// must reproduce these counts exactly. Convention: matmul and conv count
// their inner-product MACs, softmax/layer_norm/gelu count one MAC per
// element, bilinear upsampling counts its four taps per output element,
// additions / reshapes / index moves count zero.
namespace macs {
bool enabled();
std::uint64_t count();
void add(std::uint64_t n);
struct Scope {
    Scope();
    ~Scope();
    std::uint64_t total() const;
  private:
    bool prev_enabled_;
    std::uint64_t prev_count_;
};
}  // namespace macs

enum class PadMode { Same, Valid };

struct Conv2dSpec {
    std::int64_t stride = 1;
    std::int64_t groups = 1;
    PadMode pad = PadMode::Same;
};

// Output extent of a convolution along one axis. Same-padding is symmetric
// (k-1)/2 zero padding, so stride 1 preserves the extent and stride s
// yields ceil(in/s) for odd k.
std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride, PadMode pad);

// Batched matrix product. Operands are (B, 1, rows, cols) views; an operand
// with B == 1 broadcasts over the other's batch. Summation runs k-ascending
// per output element.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);
// Accumulating variant for adjoints. `out` may have batch 1 to reduce over
// the input batch (batch-ascending accumulation order).
void matmul_acc(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b, Tensor& out);

// Cross-correlation. x (n,h,w,c_in), weight (kh,kw,c_in/groups,c_out) in the
// tensor's four slots, bias (1,1,1,c_out). kh, kw must be odd.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dSpec& spec);
void conv2d_backward(const Tensor& x, const Tensor& weight, const Conv2dSpec& spec,
                     const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b);

// Max-subtracted softmax over the last axis.
Tensor softmax_lastaxis(const Tensor& x);
Tensor softmax_lastaxis_backward(const Tensor& y, const Tensor& grad_out);

// Normalization over the channel axis only, then affine. gamma/beta (1,1,1,c).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
void layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& grad_out,
                         Tensor* grad_x, Tensor* grad_gamma, Tensor* grad_beta);

// Exact-erf GELU.
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& grad_out);

// Doubles both spatial extents, half-pixel centers (align_corners=false).
Tensor bilinear_upsample_x2(const Tensor& x);
Tensor bilinear_upsample_x2_backward(const Shape& in_shape, const Tensor& grad_out);

// Zero-pads at the bottom/right. to_h/to_w must not shrink the input.
Tensor pad_spatial(const Tensor& x, std::int64_t to_h, std::int64_t to_w);
Tensor crop_spatial(const Tensor& x, std::int64_t to_h, std::int64_t to_w);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias (1,1,1,c) broadcast
Tensor channel_bias_grad(const Tensor& grad_out);      // reduces over n,h,w

Tensor global_avg_pool(const Tensor& x);  // (n,h,w,c) -> (n,1,1,c)
Tensor global_avg_pool_backward(const Shape& in_shape, const Tensor& grad_out);

Tensor sum_all(const Tensor& x);  // -> (1,1,1,1)

Tensor slice_channels(const Tensor& x, std::int64_t c0, std::int64_t c1);
void slice_channels_backward_acc(const Tensor& grad_out, std::int64_t c0, Tensor& grad_x);
Tensor concat_channels(const std::vector<Tensor>& parts);

// Mean NLL of softmax(logits) at the labelled classes. logits (1,1,N,K).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
Tensor softmax_cross_entropy_backward(const Tensor& logits, const std::vector<int>& labels,
                                      double upstream);

}  // namespace axwin
