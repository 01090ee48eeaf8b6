#include "axwin/attention.hpp"

#include <cmath>

namespace axwin {

const char* attention_mode_name(AttentionMode mode) {
    switch (mode) {
        case AttentionMode::AxWin: return "axwin";
        case AttentionMode::WindowOnly: return "window";
        case AttentionMode::AxialOnly: return "axial";
    }
    return "?";
}

AttentionMode parse_attention_mode(const std::string& name) {
    if (name == "axwin") return AttentionMode::AxWin;
    if (name == "window") return AttentionMode::WindowOnly;
    if (name == "axial") return AttentionMode::AxialOnly;
    throw ConfigError("unknown attention mode '" + name + "' (axwin|window|axial)");
}

HeadAlloc allocate_heads(int total_heads, AttentionMode mode) {
    if (total_heads < 1) throw ConfigError("head count must be >= 1");
    switch (mode) {
        case AttentionMode::AxWin:
            return {std::max(1, total_heads / 2), std::max(1, total_heads / 4),
                    std::max(1, total_heads / 4)};
        case AttentionMode::WindowOnly:
            return {total_heads, 0, 0};
        case AttentionMode::AxialOnly:
            return {0, std::max(1, total_heads / 2), std::max(1, total_heads / 2)};
    }
    return {};
}

BranchWidths branch_widths(std::int64_t c, AttentionMode mode) {
    switch (mode) {
        case AttentionMode::AxWin:
            if (c % 4 != 0) {
                throw ConfigError("axwin attention requires channels divisible by 4, got " +
                                  std::to_string(c));
            }
            return {c / 2, c / 4, c / 4};
        case AttentionMode::WindowOnly:
            return {c, 0, 0};
        case AttentionMode::AxialOnly:
            if (c % 2 != 0) throw ConfigError("axial attention requires even channels");
            return {0, c / 2, c / 2};
    }
    return {};
}

MhsaParams mhsaParamsChecked(std::int64_t width, int heads) {
    if (heads < 1 || width % heads != 0) {
        throw ConfigError("mhsa: width " + std::to_string(width) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    MhsaParams p;
    p.heads = heads;
    p.head_dim = width / heads;
    p.scale = 1.0 / std::sqrt(static_cast<double>(p.head_dim));
    return p;
}

MhsaParams mhsa_params(std::int64_t width, int heads) { return mhsaParamsChecked(width, heads); }

Var mhsa(Tape& t, Var q, Var k, Var v, int heads) {
    const Shape qs = t.value(q).shape();
    const MhsaParams p = mhsaParamsChecked(qs.c, heads);
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int hh = 0; hh < heads; ++hh) {
        const std::int64_t c0 = hh * p.head_dim;
        const std::int64_t c1 = c0 + p.head_dim;
        Var qh = t.slice_channels(q, c0, c1);
        Var kh = t.slice_channels(k, c0, c1);
        Var vh = t.slice_channels(v, c0, c1);
        Var scores = t.scale(t.matmul(qh, kh, /*transpose_b=*/true), p.scale);
        Var attn = t.softmax(scores);
        head_outs.push_back(t.matmul(attn, vh));
    }
    return heads == 1 ? head_outs.front() : t.concat_channels(head_outs);
}

namespace {

Var tokens_view(Tape& t, Var x) {
    const Shape s = t.value(x).shape();
    return t.reshape(x, Shape{s.n, 1, s.h * s.w, s.c});
}

Var spatial_view(Tape& t, Var x, std::int64_t h, std::int64_t w) {
    const Shape s = t.value(x).shape();
    return t.reshape(x, Shape{s.n, h, w, s.c});
}

}  // namespace

Var window_branch(Tape& t, Var q, Var k, Var v, std::int64_t window_size, int heads) {
    const Shape s = t.value(q).shape();
    const WindowLayout layout = window_layout(s.h, s.w, window_size);
    auto part = window_partition_spec(s.h, s.w, window_size);
    Var qw = tokens_view(t, t.regroup(q, part));
    Var kw = tokens_view(t, t.regroup(k, part));
    Var vw = tokens_view(t, t.regroup(v, part));
    Var out = mhsa(t, qw, kw, vw, heads);
    out = spatial_view(t, out, window_size, window_size);
    return t.regroup(out, window_reverse_spec(layout, s.h, s.w));
}

Var axial_family(Tape& t, Var q, Var k, Var v, std::int64_t group_size, Axis axis, int heads) {
    const Shape s = t.value(q).shape();
    const std::int64_t len = axis == Axis::Rows ? s.h : s.w;
    const AxialLayout layout = axial_layout(len, group_size, axis);
    auto part = axial_partition_spec(s.h, s.w, group_size, axis);
    Var qa = tokens_view(t, t.regroup(q, part));
    Var ka = tokens_view(t, t.regroup(k, part));
    Var va = tokens_view(t, t.regroup(v, part));
    Var out = mhsa(t, qa, ka, va, heads);
    const std::int64_t gh = axis == Axis::Rows ? group_size : s.h;
    const std::int64_t gw = axis == Axis::Rows ? s.w : group_size;
    out = spatial_view(t, out, gh, gw);
    return t.regroup(out, axial_reverse_spec(layout, s.h, s.w));
}

Var axwin_attention(Tape& t, Var x, const AttentionVars& weights, const AttentionGeometry& geo) {
    const Shape s = t.value(x).shape();
    const std::int64_t c = s.c;
    const BranchWidths widths = branch_widths(c, geo.mode);
    const HeadAlloc heads = allocate_heads(geo.heads, geo.mode);

    Var flat = tokens_view(t, x);
    Var qkv = t.add_bias(t.matmul(flat, weights.qkv_w), weights.qkv_b);
    qkv = spatial_view(t, qkv, s.h, s.w);
    Var q = t.slice_channels(qkv, 0, c);
    Var k = t.slice_channels(qkv, c, 2 * c);
    Var v = t.slice_channels(qkv, 2 * c, 3 * c);

    std::vector<Var> branch_outs;
    std::int64_t offset = 0;
    if (widths.window > 0) {
        Var qw = t.slice_channels(q, offset, offset + widths.window);
        Var kw = t.slice_channels(k, offset, offset + widths.window);
        Var vw = t.slice_channels(v, offset, offset + widths.window);
        branch_outs.push_back(window_branch(t, qw, kw, vw, geo.window_size, heads.window));
        offset += widths.window;
    }
    if (widths.rows > 0) {
        Var qr = t.slice_channels(q, offset, offset + widths.rows);
        Var kr = t.slice_channels(k, offset, offset + widths.rows);
        Var vr = t.slice_channels(v, offset, offset + widths.rows);
        branch_outs.push_back(
            axial_family(t, qr, kr, vr, geo.axial_size, Axis::Rows, heads.rows));
        offset += widths.rows;
    }
    if (widths.cols > 0) {
        Var qc = t.slice_channels(q, offset, offset + widths.cols);
        Var kc = t.slice_channels(k, offset, offset + widths.cols);
        Var vc = t.slice_channels(v, offset, offset + widths.cols);
        branch_outs.push_back(
            axial_family(t, qc, kc, vc, geo.axial_size, Axis::Columns, heads.cols));
        offset += widths.cols;
    }

    Var merged = branch_outs.size() == 1 ? branch_outs.front() : t.concat_channels(branch_outs);
    Var out = t.add_bias(t.matmul(tokens_view(t, merged), weights.out_w), weights.out_b);
    return spatial_view(t, out, s.h, s.w);
}

}  // namespace axwin
