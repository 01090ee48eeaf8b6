#include "axwin/partition.hpp"

#include <cstring>

#include "axwin/kernels.hpp"

namespace axwin {

namespace {

std::int64_t round_up(std::int64_t v, std::int64_t m) { return (v + m - 1) / m * m; }

}  // namespace

std::vector<std::int64_t> AxialLayout::group_members(std::int64_t g) const {
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(group_size));
    for (std::int64_t k = 0; k < group_size; ++k) out.push_back(member(g, k));
    return out;
}

WindowLayout window_layout(std::int64_t h, std::int64_t w, std::int64_t window_size) {
    if (window_size < 1) throw ConfigError("window size must be >= 1");
    WindowLayout l;
    l.window_size = window_size;
    l.padded_h = round_up(h, window_size);
    l.padded_w = round_up(w, window_size);
    l.wins_h = l.padded_h / window_size;
    l.wins_w = l.padded_w / window_size;
    return l;
}

AxialLayout axial_layout(std::int64_t len, std::int64_t group_size, Axis axis) {
    if (group_size < 1) throw ConfigError("axial group size must be >= 1");
    AxialLayout l;
    l.group_size = group_size;
    l.axis = axis;
    l.padded_len = round_up(len, group_size);
    l.n_groups = l.padded_len / group_size;
    return l;
}

std::shared_ptr<const RegroupSpec> window_partition_spec(std::int64_t h, std::int64_t w,
                                                         std::int64_t window_size) {
    const WindowLayout l = window_layout(h, w, window_size);
    auto spec = std::make_shared<RegroupSpec>();
    spec->in_groups = 1;
    spec->out_groups = l.n_windows();
    spec->in_h = h;
    spec->in_w = w;
    spec->out_h = window_size;
    spec->out_w = window_size;
    spec->src.resize(static_cast<std::size_t>(spec->out_groups * window_size * window_size));
    std::size_t o = 0;
    for (std::int64_t wi = 0; wi < l.wins_h; ++wi) {
        for (std::int64_t wj = 0; wj < l.wins_w; ++wj) {
            for (std::int64_t si = 0; si < window_size; ++si) {
                for (std::int64_t sj = 0; sj < window_size; ++sj) {
                    const std::int64_t ih = wi * window_size + si;
                    const std::int64_t iw = wj * window_size + sj;
                    spec->src[o++] = (ih < h && iw < w) ? ih * w + iw : -1;
                }
            }
        }
    }
    return spec;
}

std::shared_ptr<const RegroupSpec> window_reverse_spec(const WindowLayout& l, std::int64_t orig_h,
                                                       std::int64_t orig_w) {
    auto spec = std::make_shared<RegroupSpec>();
    spec->in_groups = l.n_windows();
    spec->out_groups = 1;
    spec->in_h = l.window_size;
    spec->in_w = l.window_size;
    spec->out_h = orig_h;
    spec->out_w = orig_w;
    spec->src.resize(static_cast<std::size_t>(orig_h * orig_w));
    std::size_t o = 0;
    for (std::int64_t ih = 0; ih < orig_h; ++ih) {
        for (std::int64_t iw = 0; iw < orig_w; ++iw) {
            const std::int64_t win = (ih / l.window_size) * l.wins_w + iw / l.window_size;
            const std::int64_t si = ih % l.window_size;
            const std::int64_t sj = iw % l.window_size;
            spec->src[o++] = (win * l.window_size + si) * l.window_size + sj;
        }
    }
    return spec;
}

std::shared_ptr<const RegroupSpec> axial_partition_spec(std::int64_t h, std::int64_t w,
                                                        std::int64_t group_size, Axis axis) {
    const std::int64_t len = axis == Axis::Rows ? h : w;
    const AxialLayout l = axial_layout(len, group_size, axis);
    auto spec = std::make_shared<RegroupSpec>();
    spec->in_groups = 1;
    spec->out_groups = l.n_groups;
    spec->in_h = h;
    spec->in_w = w;
    if (axis == Axis::Rows) {
        spec->out_h = group_size;
        spec->out_w = w;
        spec->src.resize(static_cast<std::size_t>(l.n_groups * group_size * w));
        std::size_t o = 0;
        for (std::int64_t g = 0; g < l.n_groups; ++g) {
            for (std::int64_t k = 0; k < group_size; ++k) {
                const std::int64_t row = l.member(g, k);
                for (std::int64_t j = 0; j < w; ++j) {
                    spec->src[o++] = row < h ? row * w + j : -1;
                }
            }
        }
    } else {
        spec->out_h = h;
        spec->out_w = group_size;
        spec->src.resize(static_cast<std::size_t>(l.n_groups * h * group_size));
        std::size_t o = 0;
        for (std::int64_t g = 0; g < l.n_groups; ++g) {
            for (std::int64_t i = 0; i < h; ++i) {
                for (std::int64_t k = 0; k < group_size; ++k) {
                    const std::int64_t col = l.member(g, k);
                    spec->src[o++] = col < w ? i * w + col : -1;
                }
            }
        }
    }
    return spec;
}

std::shared_ptr<const RegroupSpec> axial_reverse_spec(const AxialLayout& l, std::int64_t h,
                                                      std::int64_t w) {
    auto spec = std::make_shared<RegroupSpec>();
    spec->in_groups = l.n_groups;
    spec->out_groups = 1;
    spec->out_h = h;
    spec->out_w = w;
    if (l.axis == Axis::Rows) {
        spec->in_h = l.group_size;
        spec->in_w = w;
        spec->src.resize(static_cast<std::size_t>(h * w));
        std::size_t o = 0;
        for (std::int64_t i = 0; i < h; ++i) {
            const std::int64_t g = i % l.n_groups;
            const std::int64_t k = i / l.n_groups;
            for (std::int64_t j = 0; j < w; ++j) {
                spec->src[o++] = (g * l.group_size + k) * w + j;
            }
        }
    } else {
        spec->in_h = h;
        spec->in_w = l.group_size;
        spec->src.resize(static_cast<std::size_t>(h * w));
        std::size_t o = 0;
        for (std::int64_t i = 0; i < h; ++i) {
            for (std::int64_t j = 0; j < w; ++j) {
                const std::int64_t g = j % l.n_groups;
                const std::int64_t k = j / l.n_groups;
                spec->src[o++] = (g * h + i) * l.group_size + k;
            }
        }
    }
    return spec;
}

namespace {

template <typename T>
void regroup_impl(const Tensor& x, const RegroupSpec& spec, std::int64_t n_base, Tensor& out) {
    const std::int64_t c = x.shape().c;
    const std::int64_t in_block = spec.in_groups * spec.in_h * spec.in_w;
    const std::int64_t out_block = spec.out_groups * spec.out_h * spec.out_w;
    const T* xp = x.data<T>().data();
    T* op = out.mutable_data<T>().data();
    const std::size_t bytes = static_cast<std::size_t>(c) * sizeof(T);
    for (std::int64_t b = 0; b < n_base; ++b) {
        const T* xb = xp + b * in_block * c;
        T* ob = op + b * out_block * c;
        for (std::int64_t o = 0; o < out_block; ++o) {
            const std::int64_t s = spec.src[static_cast<std::size_t>(o)];
            if (s >= 0) std::memcpy(ob + o * c, xb + s * c, bytes);
        }
    }
}

template <typename T>
void regroup_backward_impl(const Tensor& g, const RegroupSpec& spec, std::int64_t n_base,
                           Tensor& gx) {
    const std::int64_t c = g.shape().c;
    const std::int64_t in_block = spec.in_groups * spec.in_h * spec.in_w;
    const std::int64_t out_block = spec.out_groups * spec.out_h * spec.out_w;
    const T* gp = g.data<T>().data();
    T* op = gx.mutable_data<T>().data();
    for (std::int64_t b = 0; b < n_base; ++b) {
        const T* gb = gp + b * out_block * c;
        T* ob = op + b * in_block * c;
        for (std::int64_t o = 0; o < out_block; ++o) {
            const std::int64_t s = spec.src[static_cast<std::size_t>(o)];
            if (s < 0) continue;
            for (std::int64_t cc = 0; cc < c; ++cc) ob[s * c + cc] += gb[o * c + cc];
        }
    }
}

std::int64_t regroup_base(const Tensor& x, const RegroupSpec& spec) {
    if (x.shape().h != spec.in_h || x.shape().w != spec.in_w ||
        x.shape().n % spec.in_groups != 0) {
        throw DimensionError("regroup: input " + x.shape().str() + " does not match spec (" +
                             std::to_string(spec.in_groups) + " groups of " +
                             std::to_string(spec.in_h) + "x" + std::to_string(spec.in_w) + ")");
    }
    return x.shape().n / spec.in_groups;
}

}  // namespace

Tensor apply_regroup(const Tensor& x, const RegroupSpec& spec) {
    const std::int64_t n_base = regroup_base(x, spec);
    Tensor out(Shape{n_base * spec.out_groups, spec.out_h, spec.out_w, x.shape().c}, x.dtype());
    if (x.dtype() == Dtype::F32) {
        regroup_impl<float>(x, spec, n_base, out);
    } else {
        regroup_impl<double>(x, spec, n_base, out);
    }
    return out;
}

void apply_regroup_backward_acc(const Tensor& grad_out, const RegroupSpec& spec, Tensor& grad_x) {
    const std::int64_t n_base = regroup_base(grad_x, spec);
    if (grad_out.shape().n != n_base * spec.out_groups || grad_out.shape().h != spec.out_h ||
        grad_out.shape().w != spec.out_w) {
        throw DimensionError("regroup backward: gradient shape mismatch");
    }
    if (grad_out.dtype() == Dtype::F32) {
        regroup_backward_impl<float>(grad_out, spec, n_base, grad_x);
    } else {
        regroup_backward_impl<double>(grad_out, spec, n_base, grad_x);
    }
}

std::pair<Tensor, WindowLayout> window_partition(const Tensor& x, std::int64_t window_size) {
    const WindowLayout l = window_layout(x.shape().h, x.shape().w, window_size);
    return {apply_regroup(x, *window_partition_spec(x.shape().h, x.shape().w, window_size)), l};
}

Tensor window_reverse(const Tensor& windows, const WindowLayout& layout, std::int64_t orig_h,
                      std::int64_t orig_w) {
    if (windows.shape().n % layout.n_windows() != 0) {
        throw DimensionError("window_reverse: window count " + std::to_string(windows.shape().n) +
                             " is not a multiple of layout's " +
                             std::to_string(layout.n_windows()));
    }
    return apply_regroup(windows, *window_reverse_spec(layout, orig_h, orig_w));
}

std::pair<Tensor, AxialLayout> axial_partition(const Tensor& x, std::int64_t group_size,
                                               Axis axis) {
    const std::int64_t len = axis == Axis::Rows ? x.shape().h : x.shape().w;
    const AxialLayout l = axial_layout(len, group_size, axis);
    return {apply_regroup(x, *axial_partition_spec(x.shape().h, x.shape().w, group_size, axis)),
            l};
}

Tensor axial_reverse(const Tensor& groups, const AxialLayout& layout, std::int64_t orig_h,
                     std::int64_t orig_w) {
    if (groups.shape().n % layout.n_groups != 0) {
        throw DimensionError("axial_reverse: group count mismatch");
    }
    return apply_regroup(groups, *axial_reverse_spec(layout, orig_h, orig_w));
}

QkvGroups split_qkv(const Tensor& xq, const Tensor& xk, const Tensor& xv) {
    const std::int64_t c = xq.shape().c;
    if (c % 4 != 0) {
        throw ConfigError("split_qkv: channel count " + std::to_string(c) +
                          " must be divisible by 4");
    }
    if (!(xk.shape() == xq.shape()) || !(xv.shape() == xq.shape())) {
        throw DimensionError("split_qkv: q/k/v shapes differ");
    }
    QkvGroups g;
    g.window_q = slice_channels(xq, 0, c / 2);
    g.window_k = slice_channels(xk, 0, c / 2);
    g.window_v = slice_channels(xv, 0, c / 2);
    g.rows_q = slice_channels(xq, c / 2, 3 * c / 4);
    g.rows_k = slice_channels(xk, c / 2, 3 * c / 4);
    g.rows_v = slice_channels(xv, c / 2, 3 * c / 4);
    g.cols_q = slice_channels(xq, 3 * c / 4, c);
    g.cols_k = slice_channels(xk, 3 * c / 4, c);
    g.cols_v = slice_channels(xv, 3 * c / 4, c);
    return g;
}

}  // namespace axwin
