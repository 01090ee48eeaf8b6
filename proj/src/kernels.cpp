#include "axwin/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace axwin {

namespace macs {
namespace {
thread_local bool g_enabled = false;
thread_local std::uint64_t g_count = 0;
}  // namespace

bool enabled() { return g_enabled; }
std::uint64_t count() { return g_count; }
void add(std::uint64_t n) {
    if (g_enabled) g_count += n;
}
Scope::Scope() : prev_enabled_(g_enabled), prev_count_(g_count) {
    g_enabled = true;
    g_count = 0;
}
Scope::~Scope() {
    g_enabled = prev_enabled_;
    g_count = prev_count_;
}
std::uint64_t Scope::total() const { return g_count; }
}  // namespace macs

std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride, PadMode pad) {
    const std::int64_t p = pad == PadMode::Same ? (k - 1) / 2 : 0;
    const std::int64_t span = in + 2 * p - k;
    if (span < 0) throw DimensionError("conv2d: kernel larger than padded input");
    return span / stride + 1;
}

namespace {

struct MatView {
    std::int64_t batch, rows, cols;
};

MatView mat_view(const Tensor& t, const char* name) {
    if (t.shape().h != 1) {
        throw DimensionError(std::string("matmul: operand ") + name +
                             " must be a (batch,1,rows,cols) view, got " + t.shape().str());
    }
    return {t.shape().n, t.shape().w, t.shape().c};
}

template <typename T>
void matmul_batch(const T* a, const T* b, T* out, std::int64_t r, std::int64_t k, std::int64_t m,
                  bool ta, bool tb) {
    // a is (r,k) when !ta else (k,r); b is (k,m) when !tb else (m,k).
    if (!ta && !tb) {
        for (std::int64_t i = 0; i < r; ++i) {
            T* orow = out + i * m;
            const T* arow = a + i * k;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const T av = arow[kk];
                const T* brow = b + kk * m;
                for (std::int64_t j = 0; j < m; ++j) orow[j] += av * brow[j];
            }
        }
    } else if (!ta && tb) {
        for (std::int64_t i = 0; i < r; ++i) {
            const T* arow = a + i * k;
            T* orow = out + i * m;
            for (std::int64_t j = 0; j < m; ++j) {
                const T* brow = b + j * k;
                T acc = 0;
                for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
                orow[j] += acc;
            }
        }
    } else if (ta && !tb) {
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const T* arow = a + kk * r;
            const T* brow = b + kk * m;
            for (std::int64_t i = 0; i < r; ++i) {
                const T av = arow[i];
                T* orow = out + i * m;
                for (std::int64_t j = 0; j < m; ++j) orow[j] += av * brow[j];
            }
        }
    } else {
        for (std::int64_t i = 0; i < r; ++i) {
            T* orow = out + i * m;
            for (std::int64_t j = 0; j < m; ++j) {
                const T* brow = b + j * k;
                T acc = 0;
                for (std::int64_t kk = 0; kk < k; ++kk) acc += a[kk * r + i] * brow[kk];
                orow[j] += acc;
            }
        }
    }
}

template <typename T>
void matmul_impl(const Tensor& a, const Tensor& b, bool ta, bool tb, Tensor& out) {
    const MatView av = mat_view(a, "a");
    const MatView bv = mat_view(b, "b");
    const std::int64_t rows = ta ? av.cols : av.rows;
    const std::int64_t inner = ta ? av.rows : av.cols;
    const std::int64_t inner_b = tb ? bv.cols : bv.rows;
    const std::int64_t cols = tb ? bv.rows : bv.cols;
    if (inner != inner_b) {
        throw DimensionError("matmul: inner extents differ, " + a.shape().str() + " vs " +
                             b.shape().str());
    }
    if (av.batch != bv.batch && av.batch != 1 && bv.batch != 1) {
        throw DimensionError("matmul: incompatible batch extents");
    }
    const std::int64_t batch = std::max(av.batch, bv.batch);
    const MatView ov = mat_view(out, "out");
    if (ov.rows != rows || ov.cols != cols || (ov.batch != batch && ov.batch != 1)) {
        throw DimensionError("matmul: bad output shape " + out.shape().str());
    }
    const T* ap = a.data<T>().data();
    const T* bp = b.data<T>().data();
    T* op = out.mutable_data<T>().data();
    const std::int64_t astride = av.rows * av.cols;
    const std::int64_t bstride = bv.rows * bv.cols;
    const std::int64_t ostride = ov.batch == 1 ? 0 : rows * cols;
    for (std::int64_t bb = 0; bb < batch; ++bb) {
        matmul_batch(ap + (av.batch == 1 ? 0 : bb * astride),
                     bp + (bv.batch == 1 ? 0 : bb * bstride), op + bb * ostride, rows, inner, cols,
                     ta, tb);
    }
    macs::add(static_cast<std::uint64_t>(batch) * rows * inner * cols);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if (a.dtype() != b.dtype()) throw DimensionError("matmul: dtype mismatch");
    const MatView av = mat_view(a, "a");
    const MatView bv = mat_view(b, "b");
    Tensor out(Shape{std::max(av.batch, bv.batch), 1, ta ? av.cols : av.rows,
                     tb ? bv.rows : bv.cols},
               a.dtype());
    if (a.dtype() == Dtype::F32) {
        matmul_impl<float>(a, b, ta, tb, out);
    } else {
        matmul_impl<double>(a, b, ta, tb, out);
    }
    ensure_finite(out, "matmul");
    return out;
}

void matmul_acc(const Tensor& a, const Tensor& b, bool ta, bool tb, Tensor& out) {
    if (a.dtype() == Dtype::F32) {
        matmul_impl<float>(a, b, ta, tb, out);
    } else {
        matmul_impl<double>(a, b, ta, tb, out);
    }
}

namespace {

struct ConvDims {
    std::int64_t kh, kw, cpg, cout, cin, oh, ow, ph, pw, cout_per_group;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Conv2dSpec& spec) {
    ConvDims d{};
    d.kh = w.shape().n;
    d.kw = w.shape().h;
    d.cpg = w.shape().w;
    d.cout = w.shape().c;
    d.cin = x.shape().c;
    if (d.kh % 2 == 0 || d.kw % 2 == 0) throw ConfigError("conv2d: kernel extents must be odd");
    if (spec.groups < 1 || d.cin % spec.groups != 0) {
        throw ConfigError("conv2d: c_in=" + std::to_string(d.cin) + " not divisible by groups=" +
                          std::to_string(spec.groups));
    }
    if (d.cout % spec.groups != 0) throw ConfigError("conv2d: c_out not divisible by groups");
    if (d.cpg != d.cin / spec.groups) {
        throw DimensionError("conv2d: weight expects c_in/groups=" + std::to_string(d.cpg) +
                             ", input has " + std::to_string(d.cin / spec.groups));
    }
    d.oh = conv_out_extent(x.shape().h, d.kh, spec.stride, spec.pad);
    d.ow = conv_out_extent(x.shape().w, d.kw, spec.stride, spec.pad);
    d.ph = spec.pad == PadMode::Same ? (d.kh - 1) / 2 : 0;
    d.pw = spec.pad == PadMode::Same ? (d.kw - 1) / 2 : 0;
    d.cout_per_group = d.cout / spec.groups;
    return d;
}

template <typename T>
void conv2d_impl(const Tensor& x, const Tensor& w, const Tensor& bias, const Conv2dSpec& spec,
                 const ConvDims& d, Tensor& out) {
    const T* xp = x.data<T>().data();
    const T* wp = w.data<T>().data();
    const T* bp = bias.data<T>().data();
    T* op = out.mutable_data<T>().data();
    const std::int64_t h = x.shape().h, wdt = x.shape().w, cin = d.cin;
    for (std::int64_t n = 0; n < x.shape().n; ++n) {
        const T* xn = xp + n * h * wdt * cin;
        for (std::int64_t oh = 0; oh < d.oh; ++oh) {
            for (std::int64_t ow = 0; ow < d.ow; ++ow) {
                T* orow = op + ((n * d.oh + oh) * d.ow + ow) * d.cout;
                for (std::int64_t co = 0; co < d.cout; ++co) {
                    const std::int64_t g = co / d.cout_per_group;
                    T acc = bp[co];
                    for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                        const std::int64_t ih = oh * spec.stride - d.ph + kh;
                        if (ih < 0 || ih >= h) continue;
                        for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                            const std::int64_t iw = ow * spec.stride - d.pw + kw;
                            if (iw < 0 || iw >= wdt) continue;
                            const T* xr = xn + (ih * wdt + iw) * cin + g * d.cpg;
                            const T* wr = wp + ((kh * d.kw + kw) * d.cpg) * d.cout + co;
                            for (std::int64_t ci = 0; ci < d.cpg; ++ci) {
                                acc += wr[ci * d.cout] * xr[ci];
                            }
                        }
                    }
                    orow[co] = acc;
                }
            }
        }
    }
    macs::add(static_cast<std::uint64_t>(x.shape().n) * d.oh * d.ow * d.cout * d.kh * d.kw *
              d.cpg);
}

template <typename T>
void conv2d_backward_impl(const Tensor& x, const Tensor& w, const Conv2dSpec& spec,
                          const ConvDims& d, const Tensor& grad_out, Tensor* gx, Tensor* gw,
                          Tensor* gb) {
    const T* xp = x.data<T>().data();
    const T* wp = w.data<T>().data();
    const T* gp = grad_out.data<T>().data();
    T* gxp = gx ? gx->mutable_data<T>().data() : nullptr;
    T* gwp = gw ? gw->mutable_data<T>().data() : nullptr;
    T* gbp = gb ? gb->mutable_data<T>().data() : nullptr;
    const std::int64_t h = x.shape().h, wdt = x.shape().w, cin = d.cin;
    for (std::int64_t n = 0; n < x.shape().n; ++n) {
        for (std::int64_t oh = 0; oh < d.oh; ++oh) {
            for (std::int64_t ow = 0; ow < d.ow; ++ow) {
                const T* grow = gp + ((n * d.oh + oh) * d.ow + ow) * d.cout;
                for (std::int64_t co = 0; co < d.cout; ++co) {
                    const T go = grow[co];
                    const std::int64_t g = co / d.cout_per_group;
                    if (gbp) gbp[co] += go;
                    for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                        const std::int64_t ih = oh * spec.stride - d.ph + kh;
                        if (ih < 0 || ih >= h) continue;
                        for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                            const std::int64_t iw = ow * spec.stride - d.pw + kw;
                            if (iw < 0 || iw >= wdt) continue;
                            const std::int64_t xbase =
                                ((n * h + ih) * wdt + iw) * cin + g * d.cpg;
                            const std::int64_t wbase = ((kh * d.kw + kw) * d.cpg) * d.cout + co;
                            for (std::int64_t ci = 0; ci < d.cpg; ++ci) {
                                if (gxp) gxp[xbase + ci] += go * wp[wbase + ci * d.cout];
                                if (gwp) gwp[wbase + ci * d.cout] += go * xp[xbase + ci];
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, const Conv2dSpec& spec) {
    if (x.dtype() != w.dtype() || x.dtype() != bias.dtype()) {
        throw DimensionError("conv2d: dtype mismatch");
    }
    const ConvDims d = conv_dims(x, w, spec);
    if (bias.numel() != d.cout) throw DimensionError("conv2d: bias length != c_out");
    Tensor out(Shape{x.shape().n, d.oh, d.ow, d.cout}, x.dtype());
    if (x.dtype() == Dtype::F32) {
        conv2d_impl<float>(x, w, bias, spec, d, out);
    } else {
        conv2d_impl<double>(x, w, bias, spec, d, out);
    }
    ensure_finite(out, "conv2d");
    return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Conv2dSpec& spec,
                     const Tensor& grad_out, Tensor* gx, Tensor* gw, Tensor* gb) {
    const ConvDims d = conv_dims(x, w, spec);
    if (x.dtype() == Dtype::F32) {
        conv2d_backward_impl<float>(x, w, spec, d, grad_out, gx, gw, gb);
    } else {
        conv2d_backward_impl<double>(x, w, spec, d, grad_out, gx, gw, gb);
    }
}

namespace {

template <typename T>
void softmax_impl(const Tensor& x, Tensor& out) {
    const std::int64_t rows = x.numel() / x.shape().c;
    const std::int64_t c = x.shape().c;
    const T* xp = x.data<T>().data();
    T* op = out.mutable_data<T>().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xr = xp + r * c;
        T* orow = op + r * c;
        T mx = xr[0];
        for (std::int64_t i = 1; i < c; ++i) mx = std::max(mx, xr[i]);
        T sum = 0;
        for (std::int64_t i = 0; i < c; ++i) {
            const T e = std::exp(xr[i] - mx);
            orow[i] = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (std::int64_t i = 0; i < c; ++i) orow[i] *= inv;
    }
    macs::add(static_cast<std::uint64_t>(x.numel()));
}

template <typename T>
void softmax_backward_impl(const Tensor& y, const Tensor& g, Tensor& out) {
    const std::int64_t rows = y.numel() / y.shape().c;
    const std::int64_t c = y.shape().c;
    const T* yp = y.data<T>().data();
    const T* gp = g.data<T>().data();
    T* op = out.mutable_data<T>().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* yr = yp + r * c;
        const T* gr = gp + r * c;
        T dot = 0;
        for (std::int64_t i = 0; i < c; ++i) dot += yr[i] * gr[i];
        T* orow = op + r * c;
        for (std::int64_t i = 0; i < c; ++i) orow[i] = yr[i] * (gr[i] - dot);
    }
}

}  // namespace

Tensor softmax_lastaxis(const Tensor& x) {
    Tensor out(x.shape(), x.dtype());
    if (x.dtype() == Dtype::F32) {
        softmax_impl<float>(x, out);
    } else {
        softmax_impl<double>(x, out);
    }
    ensure_finite(out, "softmax");
    return out;
}

Tensor softmax_lastaxis_backward(const Tensor& y, const Tensor& grad_out) {
    Tensor out(y.shape(), y.dtype());
    if (y.dtype() == Dtype::F32) {
        softmax_backward_impl<float>(y, grad_out, out);
    } else {
        softmax_backward_impl<double>(y, grad_out, out);
    }
    return out;
}

namespace {

template <typename T>
void layer_norm_impl(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                     Tensor& out) {
    const std::int64_t rows = x.numel() / x.shape().c;
    const std::int64_t c = x.shape().c;
    const T* xp = x.data<T>().data();
    const T* gp = gamma.data<T>().data();
    const T* bp = beta.data<T>().data();
    T* op = out.mutable_data<T>().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xr = xp + r * c;
        T mean = 0;
        for (std::int64_t i = 0; i < c; ++i) mean += xr[i];
        mean /= static_cast<T>(c);
        T var = 0;
        for (std::int64_t i = 0; i < c; ++i) {
            const T d = xr[i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
        T* orow = op + r * c;
        for (std::int64_t i = 0; i < c; ++i) {
            orow[i] = gp[i] * ((xr[i] - mean) * inv) + bp[i];
        }
    }
    macs::add(static_cast<std::uint64_t>(x.numel()));
}

template <typename T>
void layer_norm_backward_impl(const Tensor& x, const Tensor& gamma, double eps, const Tensor& g,
                              Tensor* gx, Tensor* ggamma, Tensor* gbeta) {
    const std::int64_t rows = x.numel() / x.shape().c;
    const std::int64_t c = x.shape().c;
    const T* xp = x.data<T>().data();
    const T* gp = gamma.data<T>().data();
    const T* grp = g.data<T>().data();
    T* gxp = gx ? gx->mutable_data<T>().data() : nullptr;
    T* ggp = ggamma ? ggamma->mutable_data<T>().data() : nullptr;
    T* gbp = gbeta ? gbeta->mutable_data<T>().data() : nullptr;
    std::vector<T> xhat(static_cast<std::size_t>(c));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xr = xp + r * c;
        const T* gr = grp + r * c;
        T mean = 0;
        for (std::int64_t i = 0; i < c; ++i) mean += xr[i];
        mean /= static_cast<T>(c);
        T var = 0;
        for (std::int64_t i = 0; i < c; ++i) {
            const T d = xr[i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
        T mean_gy = 0, mean_gyx = 0;
        for (std::int64_t i = 0; i < c; ++i) {
            xhat[static_cast<std::size_t>(i)] = (xr[i] - mean) * inv;
            const T gy = gr[i] * gp[i];
            mean_gy += gy;
            mean_gyx += gy * xhat[static_cast<std::size_t>(i)];
        }
        mean_gy /= static_cast<T>(c);
        mean_gyx /= static_cast<T>(c);
        for (std::int64_t i = 0; i < c; ++i) {
            const T xh = xhat[static_cast<std::size_t>(i)];
            if (gxp) {
                gxp[r * c + i] += inv * (gr[i] * gp[i] - mean_gy - xh * mean_gyx);
            }
            if (ggp) ggp[i] += gr[i] * xh;
            if (gbp) gbp[i] += gr[i];
        }
    }
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (gamma.numel() != x.shape().c || beta.numel() != x.shape().c) {
        throw DimensionError("layer_norm: affine extents must equal channel count");
    }
    Tensor out(x.shape(), x.dtype());
    if (x.dtype() == Dtype::F32) {
        layer_norm_impl<float>(x, gamma, beta, eps, out);
    } else {
        layer_norm_impl<double>(x, gamma, beta, eps, out);
    }
    ensure_finite(out, "layer_norm");
    return out;
}

void layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& grad_out,
                         Tensor* gx, Tensor* ggamma, Tensor* gbeta) {
    if (x.dtype() == Dtype::F32) {
        layer_norm_backward_impl<float>(x, gamma, eps, grad_out, gx, ggamma, gbeta);
    } else {
        layer_norm_backward_impl<double>(x, gamma, eps, grad_out, gx, ggamma, gbeta);
    }
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <typename T>
void gelu_impl(const Tensor& x, Tensor& out) {
    const T* xp = x.data<T>().data();
    T* op = out.mutable_data<T>().data();
    const std::int64_t count = x.numel();
    for (std::int64_t i = 0; i < count; ++i) {
        const double v = static_cast<double>(xp[i]);
        op[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
    }
    macs::add(static_cast<std::uint64_t>(count));
}

template <typename T>
void gelu_backward_impl(const Tensor& x, const Tensor& g, Tensor& out) {
    const T* xp = x.data<T>().data();
    const T* gp = g.data<T>().data();
    T* op = out.mutable_data<T>().data();
    const std::int64_t count = x.numel();
    for (std::int64_t i = 0; i < count; ++i) {
        const double v = static_cast<double>(xp[i]);
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        op[i] = static_cast<T>(static_cast<double>(gp[i]) * (cdf + v * pdf));
    }
}

}  // namespace

Tensor gelu(const Tensor& x) {
    Tensor out(x.shape(), x.dtype());
    if (x.dtype() == Dtype::F32) {
        gelu_impl<float>(x, out);
    } else {
        gelu_impl<double>(x, out);
    }
    ensure_finite(out, "gelu");
    return out;
}

Tensor gelu_backward(const Tensor& x, const Tensor& grad_out) {
    Tensor out(x.shape(), x.dtype());
    if (x.dtype() == Dtype::F32) {
        gelu_backward_impl<float>(x, grad_out, out);
    } else {
        gelu_backward_impl<double>(x, grad_out, out);
    }
    return out;
}

namespace {

struct Tap {
    std::int64_t i0, i1;
    double w0, w1;
};

// Half-pixel source taps for output index i on an axis of extent `in`.
Tap up2_tap(std::int64_t i, std::int64_t in) {
    const double src = 0.5 * static_cast<double>(i) - 0.25;
    double f = std::floor(src);
    double t = src - f;
    auto i0 = static_cast<std::int64_t>(f);
    std::int64_t i1 = i0 + 1;
    i0 = std::clamp<std::int64_t>(i0, 0, in - 1);
    i1 = std::clamp<std::int64_t>(i1, 0, in - 1);
    return {i0, i1, 1.0 - t, t};
}

template <typename T>
void up2_impl(const Tensor& x, Tensor& out) {
    const auto [n, h, w, c] = x.shape();
    const T* xp = x.data<T>().data();
    T* op = out.mutable_data<T>().data();
    for (std::int64_t in = 0; in < n; ++in) {
        for (std::int64_t oi = 0; oi < 2 * h; ++oi) {
            const Tap ty = up2_tap(oi, h);
            for (std::int64_t oj = 0; oj < 2 * w; ++oj) {
                const Tap tx = up2_tap(oj, w);
                const T* r00 = xp + ((in * h + ty.i0) * w + tx.i0) * c;
                const T* r01 = xp + ((in * h + ty.i0) * w + tx.i1) * c;
                const T* r10 = xp + ((in * h + ty.i1) * w + tx.i0) * c;
                const T* r11 = xp + ((in * h + ty.i1) * w + tx.i1) * c;
                T* orow = op + ((in * 2 * h + oi) * 2 * w + oj) * c;
                const T w00 = static_cast<T>(ty.w0 * tx.w0);
                const T w01 = static_cast<T>(ty.w0 * tx.w1);
                const T w10 = static_cast<T>(ty.w1 * tx.w0);
                const T w11 = static_cast<T>(ty.w1 * tx.w1);
                for (std::int64_t cc = 0; cc < c; ++cc) {
                    orow[cc] = w00 * r00[cc] + w01 * r01[cc] + w10 * r10[cc] + w11 * r11[cc];
                }
            }
        }
    }
    macs::add(static_cast<std::uint64_t>(out.numel()) * 4);
}

template <typename T>
void up2_backward_impl(const Shape& in_shape, const Tensor& g, Tensor& out) {
    const auto [n, h, w, c] = in_shape;
    const T* gp = g.data<T>().data();
    T* op = out.mutable_data<T>().data();
    for (std::int64_t in = 0; in < n; ++in) {
        for (std::int64_t oi = 0; oi < 2 * h; ++oi) {
            const Tap ty = up2_tap(oi, h);
            for (std::int64_t oj = 0; oj < 2 * w; ++oj) {
                const Tap tx = up2_tap(oj, w);
                const T* grow = gp + ((in * 2 * h + oi) * 2 * w + oj) * c;
                T* r00 = op + ((in * h + ty.i0) * w + tx.i0) * c;
                T* r01 = op + ((in * h + ty.i0) * w + tx.i1) * c;
                T* r10 = op + ((in * h + ty.i1) * w + tx.i0) * c;
                T* r11 = op + ((in * h + ty.i1) * w + tx.i1) * c;
                const T w00 = static_cast<T>(ty.w0 * tx.w0);
                const T w01 = static_cast<T>(ty.w0 * tx.w1);
                const T w10 = static_cast<T>(ty.w1 * tx.w0);
                const T w11 = static_cast<T>(ty.w1 * tx.w1);
                for (std::int64_t cc = 0; cc < c; ++cc) {
                    const T gv = grow[cc];
                    r00[cc] += w00 * gv;
                    r01[cc] += w01 * gv;
                    r10[cc] += w10 * gv;
                    r11[cc] += w11 * gv;
                }
            }
        }
    }
}

}  // namespace

Tensor bilinear_upsample_x2(const Tensor& x) {
    Tensor out(Shape{x.shape().n, 2 * x.shape().h, 2 * x.shape().w, x.shape().c}, x.dtype());
    if (x.dtype() == Dtype::F32) {
        up2_impl<float>(x, out);
    } else {
        up2_impl<double>(x, out);
    }
    ensure_finite(out, "bilinear_upsample_x2");
    return out;
}

Tensor bilinear_upsample_x2_backward(const Shape& in_shape, const Tensor& grad_out) {
    Tensor out(in_shape, grad_out.dtype());
    if (grad_out.dtype() == Dtype::F32) {
        up2_backward_impl<float>(in_shape, grad_out, out);
    } else {
        up2_backward_impl<double>(in_shape, grad_out, out);
    }
    return out;
}

Tensor pad_spatial(const Tensor& x, std::int64_t to_h, std::int64_t to_w) {
    const auto [n, h, w, c] = x.shape();
    if (to_h < h || to_w < w) {
        throw DimensionError("pad_spatial: target extents must not shrink the input");
    }
    if (to_h == h && to_w == w) return x;
    Tensor out(Shape{n, to_h, to_w, c}, x.dtype());
    const std::size_t row = static_cast<std::size_t>(c) * dtype_size(x.dtype());
    for (std::int64_t in = 0; in < n; ++in) {
        for (std::int64_t ih = 0; ih < h; ++ih) {
            for (std::int64_t iw = 0; iw < w; ++iw) {
                const std::int64_t src = x.shape().index(in, ih, iw, 0);
                const std::int64_t dst = out.shape().index(in, ih, iw, 0);
                if (x.dtype() == Dtype::F32) {
                    std::memcpy(out.mutable_data<float>().data() + dst,
                                x.data<float>().data() + src, row);
                } else {
                    std::memcpy(out.mutable_data<double>().data() + dst,
                                x.data<double>().data() + src, row);
                }
            }
        }
    }
    return out;
}

Tensor crop_spatial(const Tensor& x, std::int64_t to_h, std::int64_t to_w) {
    const auto [n, h, w, c] = x.shape();
    if (to_h > h || to_w > w) {
        throw DimensionError("crop_spatial: target extents must not grow the input");
    }
    if (to_h == h && to_w == w) return x;
    Tensor out(Shape{n, to_h, to_w, c}, x.dtype());
    const std::size_t row = static_cast<std::size_t>(c) * dtype_size(x.dtype());
    for (std::int64_t in = 0; in < n; ++in) {
        for (std::int64_t ih = 0; ih < to_h; ++ih) {
            for (std::int64_t iw = 0; iw < to_w; ++iw) {
                const std::int64_t src = x.shape().index(in, ih, iw, 0);
                const std::int64_t dst = out.shape().index(in, ih, iw, 0);
                if (x.dtype() == Dtype::F32) {
                    std::memcpy(out.mutable_data<float>().data() + dst,
                                x.data<float>().data() + src, row);
                } else {
                    std::memcpy(out.mutable_data<double>().data() + dst,
                                x.data<double>().data() + src, row);
                }
            }
        }
    }
    return out;
}

namespace {

template <typename T, typename F>
Tensor elementwise2(const Tensor& a, const Tensor& b, F&& f) {
    Tensor out(a.shape(), a.dtype());
    const T* ap = a.data<T>().data();
    const T* bp = b.data<T>().data();
    T* op = out.mutable_data<T>().data();
    const std::int64_t count = a.numel();
    for (std::int64_t i = 0; i < count; ++i) op[i] = f(ap[i], bp[i]);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape()) || a.dtype() != b.dtype()) {
        throw DimensionError("add: operands must match, " + a.shape().str() + " vs " +
                             b.shape().str());
    }
    Tensor out = a.dtype() == Dtype::F32
                     ? elementwise2<float>(a, b, [](float x, float y) { return x + y; })
                     : elementwise2<double>(a, b, [](double x, double y) { return x + y; });
    ensure_finite(out, "add");
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape()) || a.dtype() != b.dtype()) {
        throw DimensionError("mul: operands must match");
    }
    Tensor out = a.dtype() == Dtype::F32
                     ? elementwise2<float>(a, b, [](float x, float y) { return x * y; })
                     : elementwise2<double>(a, b, [](double x, double y) { return x * y; });
    ensure_finite(out, "mul");
    return out;
}

Tensor scale(const Tensor& x, double factor) {
    Tensor out(x.shape(), x.dtype());
    const std::int64_t count = x.numel();
    if (x.dtype() == Dtype::F32) {
        const auto xs = x.data<float>();
        auto os = out.mutable_data<float>();
        const auto f = static_cast<float>(factor);
        for (std::int64_t i = 0; i < count; ++i) os[static_cast<std::size_t>(i)] =
            xs[static_cast<std::size_t>(i)] * f;
    } else {
        const auto xs = x.data<double>();
        auto os = out.mutable_data<double>();
        for (std::int64_t i = 0; i < count; ++i) os[static_cast<std::size_t>(i)] =
            xs[static_cast<std::size_t>(i)] * factor;
    }
    ensure_finite(out, "scale");
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    const std::int64_t c = x.shape().c;
    if (bias.numel() != c) throw DimensionError("add_bias: bias length != channel count");
    Tensor out(x.shape(), x.dtype());
    const std::int64_t rows = x.numel() / c;
    if (x.dtype() == Dtype::F32) {
        const float* xp = x.data<float>().data();
        const float* bp = bias.data<float>().data();
        float* op = out.mutable_data<float>().data();
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t i = 0; i < c; ++i) op[r * c + i] = xp[r * c + i] + bp[i];
        }
    } else {
        const double* xp = x.data<double>().data();
        const double* bp = bias.data<double>().data();
        double* op = out.mutable_data<double>().data();
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t i = 0; i < c; ++i) op[r * c + i] = xp[r * c + i] + bp[i];
        }
    }
    ensure_finite(out, "add_bias");
    return out;
}

Tensor channel_bias_grad(const Tensor& grad_out) {
    const std::int64_t c = grad_out.shape().c;
    Tensor out(Shape{1, 1, 1, c}, grad_out.dtype());
    const std::int64_t rows = grad_out.numel() / c;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t i = 0; i < c; ++i) {
            out.set(i, out.get(i) + grad_out.get(r * c + i));
        }
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    const auto [n, h, w, c] = x.shape();
    Tensor out(Shape{n, 1, 1, c}, x.dtype());
    const double inv = 1.0 / static_cast<double>(h * w);
    if (x.dtype() == Dtype::F32) {
        const float* xp = x.data<float>().data();
        float* op = out.mutable_data<float>().data();
        for (std::int64_t in = 0; in < n; ++in) {
            for (std::int64_t cc = 0; cc < c; ++cc) {
                float acc = 0;
                for (std::int64_t p = 0; p < h * w; ++p) acc += xp[(in * h * w + p) * c + cc];
                op[in * c + cc] = acc * static_cast<float>(inv);
            }
        }
    } else {
        const double* xp = x.data<double>().data();
        double* op = out.mutable_data<double>().data();
        for (std::int64_t in = 0; in < n; ++in) {
            for (std::int64_t cc = 0; cc < c; ++cc) {
                double acc = 0;
                for (std::int64_t p = 0; p < h * w; ++p) acc += xp[(in * h * w + p) * c + cc];
                op[in * c + cc] = acc * inv;
            }
        }
    }
    ensure_finite(out, "global_avg_pool");
    return out;
}

Tensor global_avg_pool_backward(const Shape& in_shape, const Tensor& grad_out) {
    Tensor out(in_shape, grad_out.dtype());
    const auto [n, h, w, c] = in_shape;
    const double inv = 1.0 / static_cast<double>(h * w);
    for (std::int64_t in = 0; in < n; ++in) {
        for (std::int64_t cc = 0; cc < c; ++cc) {
            const double g = grad_out.get(in * c + cc) * inv;
            for (std::int64_t p = 0; p < h * w; ++p) {
                const std::int64_t idx = (in * h * w + p) * c + cc;
                out.set(idx, out.get(idx) + g);
            }
        }
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    Tensor out(Shape{1, 1, 1, 1}, x.dtype());
    const std::int64_t count = x.numel();
    if (x.dtype() == Dtype::F32) {
        const auto xs = x.data<float>();
        float acc = 0;
        for (std::int64_t i = 0; i < count; ++i) acc += xs[static_cast<std::size_t>(i)];
        out.set(0, acc);
    } else {
        const auto xs = x.data<double>();
        double acc = 0;
        for (std::int64_t i = 0; i < count; ++i) acc += xs[static_cast<std::size_t>(i)];
        out.set(0, acc);
    }
    ensure_finite(out, "sum_all");
    return out;
}

Tensor slice_channels(const Tensor& x, std::int64_t c0, std::int64_t c1) {
    const auto [n, h, w, c] = x.shape();
    if (c0 < 0 || c1 > c || c0 >= c1) {
        throw DimensionError("slice_channels: bad range [" + std::to_string(c0) + "," +
                             std::to_string(c1) + ") for c=" + std::to_string(c));
    }
    Tensor out(Shape{n, h, w, c1 - c0}, x.dtype());
    const std::int64_t rows = n * h * w;
    const std::int64_t width = c1 - c0;
    const std::size_t bytes = static_cast<std::size_t>(width) * dtype_size(x.dtype());
    for (std::int64_t r = 0; r < rows; ++r) {
        if (x.dtype() == Dtype::F32) {
            std::memcpy(out.mutable_data<float>().data() + r * width,
                        x.data<float>().data() + r * c + c0, bytes);
        } else {
            std::memcpy(out.mutable_data<double>().data() + r * width,
                        x.data<double>().data() + r * c + c0, bytes);
        }
    }
    return out;
}

void slice_channels_backward_acc(const Tensor& grad_out, std::int64_t c0, Tensor& grad_x) {
    const std::int64_t rows = grad_out.numel() / grad_out.shape().c;
    const std::int64_t width = grad_out.shape().c;
    const std::int64_t c = grad_x.shape().c;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t i = 0; i < width; ++i) {
            const std::int64_t dst = r * c + c0 + i;
            grad_x.set(dst, grad_x.get(dst) + grad_out.get(r * width + i));
        }
    }
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_channels: no inputs");
    const auto& first = parts.front();
    std::int64_t total_c = 0;
    for (const auto& p : parts) {
        if (p.shape().n != first.shape().n || p.shape().h != first.shape().h ||
            p.shape().w != first.shape().w || p.dtype() != first.dtype()) {
            throw DimensionError("concat_channels: spatial or dtype mismatch");
        }
        total_c += p.shape().c;
    }
    Tensor out(Shape{first.shape().n, first.shape().h, first.shape().w, total_c}, first.dtype());
    const std::int64_t rows = first.shape().n * first.shape().h * first.shape().w;
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const std::int64_t width = p.shape().c;
        const std::size_t bytes = static_cast<std::size_t>(width) * dtype_size(p.dtype());
        for (std::int64_t r = 0; r < rows; ++r) {
            if (p.dtype() == Dtype::F32) {
                std::memcpy(out.mutable_data<float>().data() + r * total_c + offset,
                            p.data<float>().data() + r * width, bytes);
            } else {
                std::memcpy(out.mutable_data<double>().data() + r * total_c + offset,
                            p.data<double>().data() + r * width, bytes);
            }
        }
        offset += width;
    }
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const std::int64_t rows = logits.shape().w;
    const std::int64_t k = logits.shape().c;
    if (logits.shape().n != 1 || logits.shape().h != 1) {
        throw DimensionError("softmax_cross_entropy: logits must be a (1,1,N,K) view");
    }
    if (static_cast<std::int64_t>(labels.size()) != rows) {
        throw DimensionError("softmax_cross_entropy: label count != row count");
    }
    double loss = 0;
    for (std::int64_t r = 0; r < rows; ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= k) throw ConfigError("softmax_cross_entropy: label out of range");
        double mx = logits.get(r * k);
        for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, logits.get(r * k + i));
        double lse = 0;
        for (std::int64_t i = 0; i < k; ++i) lse += std::exp(logits.get(r * k + i) - mx);
        lse = std::log(lse) + mx;
        loss += lse - logits.get(r * k + label);
    }
    Tensor out(Shape{1, 1, 1, 1}, logits.dtype());
    out.set(0, loss / static_cast<double>(rows));
    ensure_finite(out, "softmax_cross_entropy");
    return out;
}

Tensor softmax_cross_entropy_backward(const Tensor& logits, const std::vector<int>& labels,
                                      double upstream) {
    const std::int64_t rows = logits.shape().w;
    const std::int64_t k = logits.shape().c;
    Tensor grad(logits.shape(), logits.dtype());
    const double inv = upstream / static_cast<double>(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
        double mx = logits.get(r * k);
        for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, logits.get(r * k + i));
        double sum = 0;
        for (std::int64_t i = 0; i < k; ++i) sum += std::exp(logits.get(r * k + i) - mx);
        for (std::int64_t i = 0; i < k; ++i) {
            const double p = std::exp(logits.get(r * k + i) - mx) / sum;
            const double onehot = i == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
            grad.set(r * k + i, (p - onehot) * inv);
        }
    }
    return grad;
}

}  // namespace axwin
