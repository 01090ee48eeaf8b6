#pragma once

#include "axwin/tape.hpp"

namespace axwin {

// Routing of channels and heads across the window and axial branches.
// "axwin" splits channels c/2 : c/4 : c/4; "window" and "axial" route
// everything through one family, matching the ablation switches.
enum class AttentionMode { AxWin, WindowOnly, AxialOnly };

const char* attention_mode_name(AttentionMode mode);
AttentionMode parse_attention_mode(const std::string& name);

struct HeadAlloc {
    int window = 0, rows = 0, cols = 0;
};
struct BranchWidths {
    std::int64_t window = 0, rows = 0, cols = 0;
};

HeadAlloc allocate_heads(int total_heads, AttentionMode mode);
BranchWidths branch_widths(std::int64_t c, AttentionMode mode);

struct MhsaParams {
    int heads = 1;
    std::int64_t head_dim = 0;
    double scale = 1.0;  // 1/sqrt(head_dim)
};

MhsaParams mhsa_params(std::int64_t width, int heads);

// Attention geometry and weight handles for one layer. The q/k/v mapping is
// a single fused c -> 3c linear; out is c -> c.
struct AttentionVars {
    Var qkv_w, qkv_b;  // (1,1,c,3c), (1,1,1,3c)
    Var out_w, out_b;  // (1,1,c,c),  (1,1,1,c)
};

struct AttentionGeometry {
    std::int64_t window_size = 7;
    std::int64_t axial_size = 7;  // s_ar == s_ac
    int heads = 1;
    AttentionMode mode = AttentionMode::AxWin;
};

// q/k/v are (B, 1, tokens, width) views; per head softmax(q k^T / sqrt(d)) v,
// heads concatenated along the channel axis. No positional bias term.
Var mhsa(Tape& t, Var q, Var k, Var v, int heads);

// q/k/v are (n, h, w, width) channel slices. Window partition -> per-window
// mhsa -> reverse (padding cropped by the reverse map).
Var window_branch(Tape& t, Var q, Var k, Var v, std::int64_t window_size, int heads);

// One axial family (rows or columns): interleaved partition -> per-group
// mhsa over s*len tokens -> reverse.
Var axial_family(Tape& t, Var q, Var k, Var v, std::int64_t group_size, Axis axis, int heads);

// Full assembly: qkv projection, channel split, window || axial branches,
// channel concat in window/rows/cols order, output projection. The output
// shape equals the input shape for any h, w.
Var axwin_attention(Tape& t, Var x, const AttentionVars& weights, const AttentionGeometry& geo);

}  // namespace axwin
