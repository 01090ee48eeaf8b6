#include "axwin/analysis.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace axwin {

const CostEntry* CostReport::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

namespace {

struct Walker {
    std::vector<CostEntry> entries;

    CostEntry* current = nullptr;

    void begin(const std::string& name) {
        entries.push_back(CostEntry{name, 0, 0});
        current = &entries.back();
    }
    void params(std::int64_t p) { current->params += p; }
    void flops(std::int64_t f) { current->flops += f; }

    void conv(std::int64_t k, std::int64_t c_in, std::int64_t c_out, std::int64_t groups,
              std::int64_t oh, std::int64_t ow) {
        params(k * k * (c_in / groups) * c_out + c_out);
        flops(oh * ow * c_out * k * k * (c_in / groups));
    }
    void linear(std::int64_t tokens, std::int64_t c_in, std::int64_t c_out) {
        params(c_in * c_out + c_out);
        flops(tokens * c_in * c_out);
    }
    void layer_norm(std::int64_t tokens, std::int64_t c) {
        params(2 * c);
        flops(tokens * c);
    }
    void gelu(std::int64_t count) { flops(count); }
    void upsample(std::int64_t out_count) { flops(4 * out_count); }
    // One branch family: `groups` attention groups of `tokens` tokens at
    // `width` channels over `heads` heads.
    void attention_groups(std::int64_t groups, std::int64_t tokens, std::int64_t width,
                          int heads) {
        if (width == 0 || groups == 0) return;
        const std::int64_t head_dim = width / heads;
        // Per head: QK^T (T*d*T), softmax (T*T), AV (T*T*d).
        flops(groups * heads * (tokens * head_dim * tokens + tokens * tokens +
                                tokens * tokens * head_dim));
    }
};

struct Extent {
    std::int64_t h, w;
};

Extent conv_extent(Extent e, std::int64_t k, std::int64_t stride) {
    return {conv_out_extent(e.h, k, stride, PadMode::Same),
            conv_out_extent(e.w, k, stride, PadMode::Same)};
}

Extent mspe_walk(Walker& wk, Extent in, std::int64_t c, int branches) {
    std::vector<Extent> sizes;
    for (int b = 1; b <= branches; ++b) {
        Extent e = in;
        for (int k = 0; k < b; ++k) {
            e = conv_extent(e, 3, 2);
            wk.conv(3, c, c, c, e.h, e.w);
        }
        sizes.push_back(e);
    }
    Extent f = sizes.back();
    for (int j = branches - 2; j >= 0; --j) {
        wk.upsample(2 * f.h * 2 * f.w * c);
        f = sizes[static_cast<std::size_t>(j)];  // crop (free) to the shallower branch
        wk.conv(3, c, c, c, f.h, f.w);
    }
    wk.conv(1, c, 2 * c, 1, f.h, f.w);
    return f;
}

void attention_walk(Walker& wk, Extent e, std::int64_t c, std::int64_t S, std::int64_t s,
                    int total_heads, AttentionMode mode) {
    const std::int64_t tokens = e.h * e.w;
    const BranchWidths widths = branch_widths(c, mode);
    const HeadAlloc heads = allocate_heads(total_heads, mode);
    wk.linear(tokens, c, 3 * c);  // fused qkv projection
    if (widths.window > 0) {
        const WindowLayout l = window_layout(e.h, e.w, S);
        wk.attention_groups(l.n_windows(), S * S, widths.window, heads.window);
    }
    if (widths.rows > 0) {
        const AxialLayout l = axial_layout(e.h, s, Axis::Rows);
        wk.attention_groups(l.n_groups, s * e.w, widths.rows, heads.rows);
    }
    if (widths.cols > 0) {
        const AxialLayout l = axial_layout(e.w, s, Axis::Columns);
        wk.attention_groups(l.n_groups, e.h * s, widths.cols, heads.cols);
    }
    wk.linear(tokens, c, c);  // output projection
}

std::vector<CostEntry> walk_costs(const VariantConfig& cfg, std::int64_t h, std::int64_t w) {
    cfg.validate();
    Walker wk;
    Extent e{h, w};
    // stem: conv/s2 + gelu, conv/s1 + gelu, conv/s1
    e = conv_extent(e, 3, 2);
    wk.begin("stem.conv1");
    wk.conv(3, 3, cfg.stem_channels, 1, e.h, e.w);
    wk.gelu(e.h * e.w * cfg.stem_channels);
    wk.begin("stem.conv2");
    wk.conv(3, cfg.stem_channels, cfg.stem_channels, 1, e.h, e.w);
    wk.gelu(e.h * e.w * cfg.stem_channels);
    wk.begin("stem.conv3");
    wk.conv(3, cfg.stem_channels, cfg.stem_channels, 1, e.h, e.w);

    std::int64_t c = cfg.stem_channels;
    for (int i = 0; i < 4; ++i) {
        const std::string sbase = "stage" + std::to_string(i + 1);
        wk.begin(sbase + ".mspe");
        e = mspe_walk(wk, e, c, VariantConfig::mspe_branches(i));
        c = cfg.channels[static_cast<std::size_t>(i)];
        const std::int64_t tokens = e.h * e.w;
        const std::int64_t hidden = cfg.expand_ratio[static_cast<std::size_t>(i)] * c;
        for (int j = 0; j < cfg.depths[static_cast<std::size_t>(i)]; ++j) {
            const std::string base = sbase + ".block" + std::to_string(j);
            wk.begin(base + ".cpe");
            wk.conv(3, c, c, c, e.h, e.w);
            wk.begin(base + ".ln1");
            wk.layer_norm(tokens, c);
            wk.begin(base + ".attn");
            attention_walk(wk, e, c, cfg.split_size[static_cast<std::size_t>(i)],
                           cfg.split_size[static_cast<std::size_t>(i)],
                           cfg.heads[static_cast<std::size_t>(i)], cfg.mode);
            wk.begin(base + ".ln2");
            wk.layer_norm(tokens, c);
            wk.begin(base + ".icffn");
            wk.linear(tokens, c, hidden);
            wk.gelu(tokens * hidden);
            wk.conv(3, hidden, hidden, hidden, e.h, e.w);
            wk.gelu(tokens * hidden);
            wk.linear(tokens, hidden, c);
        }
    }
    wk.begin("head.norm");
    wk.layer_norm(e.h * e.w, c);
    wk.begin("head.linear");
    wk.linear(1, c, cfg.num_classes);
    return std::move(wk.entries);
}

CostReport finalize(const VariantConfig& cfg, std::int64_t h, std::int64_t w,
                    std::vector<CostEntry> entries) {
    CostReport r;
    r.variant = cfg.name;
    r.res_h = h;
    r.res_w = w;
    r.entries = std::move(entries);
    for (const auto& e : r.entries) {
        r.total_params += e.params;
        r.total_flops += e.flops;
    }
    return r;
}

}  // namespace

CostReport count_params(const VariantConfig& cfg) {
    // Walk at an arbitrary valid resolution, then drop the flops.
    const std::int64_t res = 64 << 2;  // comfortably large enough for 4 branches
    std::vector<CostEntry> entries = walk_costs(cfg, res, res);
    for (auto& e : entries) e.flops = 0;
    CostReport r = finalize(cfg, 0, 0, std::move(entries));
    r.total_flops = 0;
    return r;
}

CostReport count_flops(const VariantConfig& cfg, std::int64_t h, std::int64_t w) {
    if (h < 64 || w < 64) throw ConfigError("count_flops: resolution must be at least 64");
    return finalize(cfg, h, w, walk_costs(cfg, h, w));
}

AttentionCostTable attention_flops_compare(std::int64_t h, std::int64_t w, std::int64_t c,
                                           std::int64_t S, std::int64_t s, int heads) {
    (void)heads;  // QK^T + AV cost is independent of the head split
    if (c % 4 != 0) throw ConfigError("attention comparator requires c divisible by 4");
    AttentionCostTable t;
    const std::int64_t hw = h * w;
    t.global = 2 * hw * hw * c;

    const WindowLayout wl = window_layout(h, w, S);
    const std::int64_t win_tokens = S * S;
    t.window = 2 * wl.n_windows() * win_tokens * win_tokens * c;

    const AxialLayout rl = axial_layout(h, s, Axis::Rows);
    const AxialLayout cl = axial_layout(w, s, Axis::Columns);
    const std::int64_t row_tokens = s * w;
    const std::int64_t col_tokens = h * s;
    auto family = [](std::int64_t groups, std::int64_t tokens, std::int64_t width) {
        return 2 * groups * tokens * tokens * width;
    };
    t.axial = family(rl.n_groups, row_tokens, c / 2) + family(cl.n_groups, col_tokens, c / 2);
    t.axwin = 2 * wl.n_windows() * win_tokens * win_tokens * (c / 2) +
              family(rl.n_groups, row_tokens, c / 4) + family(cl.n_groups, col_tokens, c / 4);
    return t;
}

ReportFormat parse_report_format(const std::string& name) {
    if (name == "json") return ReportFormat::Json;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "table") return ReportFormat::Table;
    throw ConfigError("unknown report format '" + name + "' (json|csv|table)");
}

std::string emit_report(const CostReport& report, ReportFormat format) {
    if (format == ReportFormat::Json) {
        nlohmann::json j;
        j["variant"] = report.variant;
        j["resolution"] = {report.res_h, report.res_w};
        j["convention"] = report.convention;
        auto entries = nlohmann::json::array();
        for (const auto& e : report.entries) {
            entries.push_back({{"name", e.name}, {"params", e.params}, {"flops", e.flops}});
        }
        j["entries"] = entries;
        j["total_params"] = report.total_params;
        j["total_flops"] = report.total_flops;
        return j.dump(2) + "\n";
    }
    if (format == ReportFormat::Csv) {
        std::ostringstream out;
        out << "name,params,flops\n";
        for (const auto& e : report.entries) {
            out << e.name << "," << e.params << "," << e.flops << "\n";
        }
        out << "total," << report.total_params << "," << report.total_flops << "\n";
        return out.str();
    }
    std::ostringstream out;
    std::size_t width = 12;
    for (const auto& e : report.entries) width = std::max(width, e.name.size());
    out << std::left << std::setw(static_cast<int>(width) + 2) << "layer" << std::right
        << std::setw(14) << "params" << std::setw(18) << "flops" << "\n";
    for (const auto& e : report.entries) {
        out << std::left << std::setw(static_cast<int>(width) + 2) << e.name << std::right
            << std::setw(14) << e.params << std::setw(18) << e.flops << "\n";
    }
    out << std::left << std::setw(static_cast<int>(width) + 2) << "total" << std::right
        << std::setw(14) << report.total_params << std::setw(18) << report.total_flops << "\n";
    out << "convention: 1 MAC = 1 FLOP";
    if (report.res_h > 0) out << "; resolution " << report.res_h << "x" << report.res_w;
    out << "\n";
    return out.str();
}

}  // namespace axwin
