#pragma once

#include <memory>
#include <vector>

#include "axwin/tensor.hpp"

namespace axwin {

// A spatial regrouping: the input is (n_base * in_groups, in_h, in_w, c),
// the output (n_base * out_groups, out_h, out_w, c), and each output cell
// either copies one input cell of the same base sample or is zero-filled
// (src == -1, used for padding). Window and axial partitions and their
// inverses are all instances; the adjoint is a scatter-add through `src`.
struct RegroupSpec {
    std::int64_t in_groups = 1;
    std::int64_t out_groups = 1;
    std::int64_t in_h = 0, in_w = 0;
    std::int64_t out_h = 0, out_w = 0;
    // Length out_groups*out_h*out_w; values index (group*in_h + i)*in_w + j.
    std::vector<std::int64_t> src;
};

struct WindowLayout {
    std::int64_t window_size = 1;
    std::int64_t padded_h = 0, padded_w = 0;
    std::int64_t wins_h = 0, wins_w = 0;
    std::int64_t n_windows() const { return wins_h * wins_w; }
};

enum class Axis { Rows, Columns };

struct AxialLayout {
    std::int64_t group_size = 1;  // s: members per group
    Axis axis = Axis::Rows;
    std::int64_t padded_len = 0;  // grouping axis padded to a multiple of s
    std::int64_t n_groups = 0;    // padded_len / s
    // Original index of member k in group g: g + k * n_groups.
    std::int64_t member(std::int64_t g, std::int64_t k) const { return g + k * n_groups; }
    std::vector<std::int64_t> group_members(std::int64_t g) const;
};

WindowLayout window_layout(std::int64_t h, std::int64_t w, std::int64_t window_size);
AxialLayout axial_layout(std::int64_t len, std::int64_t group_size, Axis axis);

// (n,h,w,c) -> (n*n_windows, S, S, c); out-of-range cells zero-filled.
std::shared_ptr<const RegroupSpec> window_partition_spec(std::int64_t h, std::int64_t w,
                                                         std::int64_t window_size);
// Exact inverse, cropping the padding: -> (n, orig_h, orig_w, c).
std::shared_ptr<const RegroupSpec> window_reverse_spec(const WindowLayout& layout,
                                                       std::int64_t orig_h, std::int64_t orig_w);

// Rows: (n,h,w,c) -> (n*G, s, w, c) with interleaved member rows.
// Columns: (n,h,w,c) -> (n*G, h, s, c).
std::shared_ptr<const RegroupSpec> axial_partition_spec(std::int64_t h, std::int64_t w,
                                                        std::int64_t group_size, Axis axis);
std::shared_ptr<const RegroupSpec> axial_reverse_spec(const AxialLayout& layout, std::int64_t h,
                                                      std::int64_t w);

Tensor apply_regroup(const Tensor& x, const RegroupSpec& spec);
void apply_regroup_backward_acc(const Tensor& grad_out, const RegroupSpec& spec, Tensor& grad_x);

// Convenience wrappers over the specs.
std::pair<Tensor, WindowLayout> window_partition(const Tensor& x, std::int64_t window_size);
Tensor window_reverse(const Tensor& windows, const WindowLayout& layout, std::int64_t orig_h,
                      std::int64_t orig_w);
std::pair<Tensor, AxialLayout> axial_partition(const Tensor& x, std::int64_t group_size,
                                               Axis axis);
Tensor axial_reverse(const Tensor& groups, const AxialLayout& layout, std::int64_t orig_h,
                     std::int64_t orig_w);

// Channel split of the q/k/v projections: [0, c/2) -> window group,
// [c/2, 3c/4) -> axial rows, [3c/4, c) -> axial columns.
struct QkvGroups {
    Tensor window_q, window_k, window_v;  // width c/2
    Tensor rows_q, rows_k, rows_v;        // width c/4
    Tensor cols_q, cols_k, cols_v;        // width c/4
};

QkvGroups split_qkv(const Tensor& xq, const Tensor& xk, const Tensor& xv);

}  // namespace axwin
