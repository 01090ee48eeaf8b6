#include "axwin/model.hpp"

#include <filesystem>
#include <fstream>

#include "axwin/io.hpp"
#include "json.hpp"

namespace axwin {

void VariantConfig::validate() const {
    for (int i = 0; i < 4; ++i) {
        if (reduction[i] != 2) throw ConfigError("stage reductions are fixed at 2");
        if (channels[i] < 4 || channels[i] % 4 != 0) {
            throw ConfigError("stage " + std::to_string(i + 1) + " channels must be a positive multiple of 4");
        }
        if (split_size[i] < 1) throw ConfigError("split size must be >= 1");
        if (expand_ratio[i] < 1) throw ConfigError("expand ratio must be >= 1");
        if (depths[i] < 1) throw ConfigError("stage depth must be >= 1");
        const BranchWidths widths = branch_widths(channels[i], mode);
        const HeadAlloc alloc = allocate_heads(heads[i], mode);
        auto check = [&](std::int64_t width, int h, const char* which) {
            if (width > 0 && (h < 1 || width % h != 0)) {
                throw ConfigError(std::string("stage ") + std::to_string(i + 1) + " " + which +
                                  " branch width " + std::to_string(width) +
                                  " not divisible by its " + std::to_string(h) + " heads");
            }
        };
        check(widths.window, alloc.window, "window");
        check(widths.rows, alloc.rows, "rows");
        check(widths.cols, alloc.cols, "columns");
    }
    if (stem_channels < 1) throw ConfigError("stem channels must be >= 1");
    if (channels[0] != 2 * stem_channels) {
        throw ConfigError("stage 1 channels must equal twice the stem channels");
    }
    for (int i = 1; i < 4; ++i) {
        if (channels[i] != 2 * channels[i - 1]) {
            throw ConfigError("stage channels must double at each stage");
        }
    }
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
}

VariantConfig variant_config(const std::string& name, std::int64_t num_classes) {
    VariantConfig cfg;
    cfg.name = name;
    cfg.num_classes = num_classes;
    if (name == "tiny") {
        cfg.stem_channels = 32;
        cfg.channels = {64, 128, 256, 512};
        cfg.heads = {2, 4, 8, 16};
        cfg.split_size = {7, 7, 7, 7};
        cfg.expand_ratio = {4, 4, 4, 4};
        cfg.depths = {2, 2, 17, 2};
    } else if (name == "small") {
        cfg.stem_channels = 48;
        cfg.channels = {96, 192, 384, 768};
        cfg.heads = {2, 4, 8, 16};
        cfg.split_size = {7, 7, 7, 7};
        cfg.expand_ratio = {4, 4, 4, 4};
        cfg.depths = {2, 2, 17, 2};
    } else if (name == "base") {
        cfg.stem_channels = 56;
        cfg.channels = {112, 224, 448, 896};
        cfg.heads = {4, 8, 16, 32};
        cfg.split_size = {12, 12, 12, 12};
        cfg.expand_ratio = {4, 4, 4, 4};
        cfg.depths = {2, 2, 17, 2};
    } else if (name == "micro") {
        // Desk-scale configuration for tests and the training smoke run;
        // not one of the published variants.
        cfg.stem_channels = 8;
        cfg.channels = {16, 32, 64, 128};
        cfg.heads = {1, 2, 4, 8};
        cfg.split_size = {4, 4, 4, 4};
        cfg.expand_ratio = {2, 2, 2, 2};
        cfg.depths = {1, 1, 2, 1};
    } else {
        throw ConfigError("unknown variant '" + name + "' (tiny|small|base|micro)");
    }
    cfg.validate();
    return cfg;
}

namespace {

LinearParams make_linear(std::int64_t in, std::int64_t out, Dtype dtype, Rng& rng) {
    LinearParams p;
    p.w = Tensor::truncated_normal(Shape{1, 1, in, out}, dtype, rng, kInitStd);
    p.b = Tensor::zeros(Shape{1, 1, 1, out}, dtype);
    return p;
}

ConvParams make_conv(std::int64_t k, std::int64_t c_in, std::int64_t c_out, std::int64_t stride,
                     std::int64_t groups, Dtype dtype, Rng& rng) {
    ConvParams p;
    p.w = Tensor::truncated_normal(Shape{k, k, c_in / groups, c_out}, dtype, rng, kInitStd);
    p.b = Tensor::zeros(Shape{1, 1, 1, c_out}, dtype);
    p.spec = Conv2dSpec{stride, groups, PadMode::Same};
    return p;
}

LayerNormParams make_ln(std::int64_t c, Dtype dtype) {
    LayerNormParams p;
    p.gamma = Tensor::full(Shape{1, 1, 1, c}, dtype, 1.0);
    p.beta = Tensor::zeros(Shape{1, 1, 1, c}, dtype);
    return p;
}

BlockParams make_block(std::int64_t c, std::int64_t ratio, Dtype dtype, Rng& rng) {
    BlockParams b;
    b.cpe = make_conv(3, c, c, 1, c, dtype, rng);
    b.ln1 = make_ln(c, dtype);
    b.qkv = make_linear(c, 3 * c, dtype, rng);
    b.attn_out = make_linear(c, c, dtype, rng);
    b.ln2 = make_ln(c, dtype);
    const std::int64_t hidden = ratio * c;
    b.fc1 = make_linear(c, hidden, dtype, rng);
    b.ffn_dw = make_conv(3, hidden, hidden, 1, hidden, dtype, rng);
    b.fc2 = make_linear(hidden, c, dtype, rng);
    return b;
}

MspeParams make_mspe(std::int64_t c_in, int branches, Dtype dtype, Rng& rng) {
    MspeParams m;
    for (int b = 1; b <= branches; ++b) {
        std::vector<ConvParams> chain;
        for (int k = 0; k < b; ++k) chain.push_back(make_conv(3, c_in, c_in, 2, c_in, dtype, rng));
        m.branches.push_back(std::move(chain));
    }
    for (int j = 0; j < branches - 1; ++j) {
        m.fuse.push_back(make_conv(3, c_in, c_in, 1, c_in, dtype, rng));
    }
    m.proj = make_conv(1, c_in, 2 * c_in, 1, 1, dtype, rng);
    return m;
}

}  // namespace

Model build_model(const VariantConfig& cfg, std::uint64_t seed, Dtype dtype) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    m.dtype = dtype;
    m.seed = seed;
    Rng rng(seed);
    m.stem[0] = make_conv(3, 3, cfg.stem_channels, 2, 1, dtype, rng);
    m.stem[1] = make_conv(3, cfg.stem_channels, cfg.stem_channels, 1, 1, dtype, rng);
    m.stem[2] = make_conv(3, cfg.stem_channels, cfg.stem_channels, 1, 1, dtype, rng);
    std::int64_t c = cfg.stem_channels;
    for (int i = 0; i < 4; ++i) {
        StageParams stage;
        stage.mspe = make_mspe(c, VariantConfig::mspe_branches(i), dtype, rng);
        c = cfg.channels[i];
        for (int j = 0; j < cfg.depths[i]; ++j) {
            stage.blocks.push_back(make_block(c, cfg.expand_ratio[i], dtype, rng));
        }
        m.stages[i] = std::move(stage);
    }
    m.head_norm = make_ln(c, dtype);
    m.head = make_linear(c, cfg.num_classes, dtype, rng);
    return m;
}

Model build_variant(const std::string& name, std::int64_t num_classes, std::uint64_t seed,
                    Dtype dtype) {
    return build_model(variant_config(name, num_classes), seed, dtype);
}

namespace {

template <typename ModelT, typename Fn>
void walk_params(ModelT& m, Fn&& fn) {
    for (int k = 0; k < 3; ++k) {
        const std::string base = "stem.conv" + std::to_string(k + 1);
        fn(base + ".weight", m.stem[static_cast<std::size_t>(k)].w);
        fn(base + ".bias", m.stem[static_cast<std::size_t>(k)].b);
    }
    for (int i = 0; i < 4; ++i) {
        auto& stage = m.stages[static_cast<std::size_t>(i)];
        const std::string sbase = "stage" + std::to_string(i + 1);
        auto& mspe = stage.mspe;
        for (std::size_t b = 0; b < mspe.branches.size(); ++b) {
            for (std::size_t k = 0; k < mspe.branches[b].size(); ++k) {
                const std::string base = sbase + ".mspe.branch" + std::to_string(b + 1) +
                                         ".conv" + std::to_string(k + 1);
                fn(base + ".weight", mspe.branches[b][k].w);
                fn(base + ".bias", mspe.branches[b][k].b);
            }
        }
        for (std::size_t j = 0; j < mspe.fuse.size(); ++j) {
            const std::string base = sbase + ".mspe.fuse" + std::to_string(j + 1);
            fn(base + ".weight", mspe.fuse[j].w);
            fn(base + ".bias", mspe.fuse[j].b);
        }
        fn(sbase + ".mspe.proj.weight", mspe.proj.w);
        fn(sbase + ".mspe.proj.bias", mspe.proj.b);
        for (std::size_t j = 0; j < stage.blocks.size(); ++j) {
            auto& blk = stage.blocks[j];
            const std::string base = sbase + ".block" + std::to_string(j);
            fn(base + ".cpe.weight", blk.cpe.w);
            fn(base + ".cpe.bias", blk.cpe.b);
            fn(base + ".ln1.gamma", blk.ln1.gamma);
            fn(base + ".ln1.beta", blk.ln1.beta);
            fn(base + ".attn.qkv.weight", blk.qkv.w);
            fn(base + ".attn.qkv.bias", blk.qkv.b);
            fn(base + ".attn.out.weight", blk.attn_out.w);
            fn(base + ".attn.out.bias", blk.attn_out.b);
            fn(base + ".ln2.gamma", blk.ln2.gamma);
            fn(base + ".ln2.beta", blk.ln2.beta);
            fn(base + ".icffn.fc1.weight", blk.fc1.w);
            fn(base + ".icffn.fc1.bias", blk.fc1.b);
            fn(base + ".icffn.dw.weight", blk.ffn_dw.w);
            fn(base + ".icffn.dw.bias", blk.ffn_dw.b);
            fn(base + ".icffn.fc2.weight", blk.fc2.w);
            fn(base + ".icffn.fc2.bias", blk.fc2.b);
        }
    }
    fn("head.norm.gamma", m.head_norm.gamma);
    fn("head.norm.beta", m.head_norm.beta);
    fn("head.linear.weight", m.head.w);
    fn("head.linear.bias", m.head.b);
}

}  // namespace

void for_each_param(Model& m, const std::function<void(const std::string&, Tensor&)>& fn) {
    walk_params(m, fn);
}

void for_each_param(const Model& m,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
    walk_params(m, fn);
}

std::int64_t parameter_count(const Model& m) {
    std::int64_t total = 0;
    for_each_param(m, [&](const std::string&, const Tensor& t) { total += t.numel(); });
    return total;
}

Var ParamBinder::operator()(const Tensor& param) {
    auto it = bound_.find(&param);
    if (it != bound_.end()) return it->second;
    Var v = tape_->leaf(param);
    bound_.emplace(&param, v);
    return v;
}

namespace {

Var conv_op(Tape& t, Var x, const ConvParams& p, ParamBinder& bind) {
    return t.conv2d(x, bind(p.w), bind(p.b), p.spec);
}

Var ln_op(Tape& t, Var x, const LayerNormParams& p, ParamBinder& bind) {
    return t.layer_norm(x, bind(p.gamma), bind(p.beta), kLayerNormEps);
}

Var linear_op(Tape& t, Var x, const LinearParams& p, ParamBinder& bind) {
    const Shape s = t.value(x).shape();
    Var flat = t.reshape(x, Shape{s.n, 1, s.h * s.w, s.c});
    Var y = t.add_bias(t.matmul(flat, bind(p.w)), bind(p.b));
    return t.reshape(y, Shape{s.n, s.h, s.w, t.value(y).shape().c});
}

}  // namespace

Var cpe_forward(Tape& t, Var x, const ConvParams& cpe, ParamBinder& bind) {
    return t.add(x, conv_op(t, x, cpe, bind));
}

Var icffn_forward(Tape& t, Var x, const BlockParams& p, ParamBinder& bind) {
    Var h = t.gelu(linear_op(t, x, p.fc1, bind));
    h = t.gelu(conv_op(t, h, p.ffn_dw, bind));
    return linear_op(t, h, p.fc2, bind);
}

Var axwin_block_forward(Tape& t, Var x, const BlockParams& p, const AttentionGeometry& geo,
                        ParamBinder& bind) {
    x = cpe_forward(t, x, p.cpe, bind);
    AttentionVars weights{bind(p.qkv.w), bind(p.qkv.b), bind(p.attn_out.w), bind(p.attn_out.b)};
    x = t.add(x, axwin_attention(t, ln_op(t, x, p.ln1, bind), weights, geo));
    x = t.add(x, icffn_forward(t, ln_op(t, x, p.ln2, bind), p, bind));
    return x;
}

Var mspe_forward(Tape& t, Var x, const MspeParams& p, ParamBinder& bind) {
    const Shape in = t.value(x).shape();
    const auto branches = static_cast<std::int64_t>(p.branches.size());
    if (in.h < (std::int64_t{1} << branches) || in.w < (std::int64_t{1} << branches)) {
        throw ConfigError("mspe: input " + in.str() + " too small for " +
                          std::to_string(branches) + " branches");
    }
    std::vector<Var> feats;
    feats.reserve(p.branches.size());
    for (const auto& chain : p.branches) {
        Var f = x;
        for (const auto& conv : chain) f = conv_op(t, f, conv, bind);
        feats.push_back(f);
    }
    Var fused = feats.back();
    for (std::size_t j = p.branches.size() - 1; j-- > 0;) {
        Var up = t.upsample2x(fused);
        const Shape target = t.value(feats[j]).shape();
        const Shape ups = t.value(up).shape();
        if (ups.h != target.h || ups.w != target.w) {
            up = t.crop_spatial(up, target.h, target.w);
        }
        fused = conv_op(t, t.add(up, feats[j]), p.fuse[j], bind);
    }
    return conv_op(t, fused, p.proj, bind);
}

Var stem_forward(Tape& t, Var x, const Model& m, ParamBinder& bind) {
    Var y = t.gelu(conv_op(t, x, m.stem[0], bind));
    y = t.gelu(conv_op(t, y, m.stem[1], bind));
    return conv_op(t, y, m.stem[2], bind);
}

ForwardResult backbone_forward(Tape& t, Var x, const Model& m, ParamBinder& bind) {
    const Shape in = t.value(x).shape();
    if (in.c != 3) throw ConfigError("backbone expects 3 input channels, got " + in.str());
    if (in.h % 2 != 0 || in.w % 2 != 0) {
        throw ConfigError("backbone expects even input extents, got " + in.str());
    }
    ForwardResult result;
    Var y = stem_forward(t, x, m, bind);
    for (int i = 0; i < 4; ++i) {
        const auto& stage = m.stages[static_cast<std::size_t>(i)];
        y = mspe_forward(t, y, stage.mspe, bind);
        AttentionGeometry geo;
        geo.window_size = m.cfg.split_size[i];
        geo.axial_size = m.cfg.split_size[i];
        geo.heads = m.cfg.heads[i];
        geo.mode = m.cfg.mode;
        for (const auto& blk : stage.blocks) {
            y = axwin_block_forward(t, y, blk, geo, bind);
        }
        result.stage_features[static_cast<std::size_t>(i)] = y;
    }
    Var pooled = t.global_avg_pool(ln_op(t, y, m.head_norm, bind));
    const Shape ps = t.value(pooled).shape();
    Var flat = t.reshape(pooled, Shape{1, 1, ps.n, ps.c});
    result.logits = t.add_bias(t.matmul(flat, bind(m.head.w)), bind(m.head.b));
    return result;
}

void save_checkpoint(const Model& m, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("save_checkpoint: cannot create '" + dir + "'");
    nlohmann::json manifest;
    manifest["format"] = "axwin-checkpoint";
    manifest["version"] = 1;
    manifest["variant"] = m.cfg.name;
    manifest["seed"] = m.seed;
    manifest["dtype"] = dtype_name(m.dtype);
    manifest["num_classes"] = m.cfg.num_classes;
    manifest["attention_mode"] = attention_mode_name(m.cfg.mode);
    manifest["split_size"] = m.cfg.split_size;
    auto params = nlohmann::json::array();
    for_each_param(m, [&](const std::string& name, const Tensor& t) {
        const std::string file = name + ".axtf";
        params.push_back({{"name", name},
                          {"shape", {t.shape().n, t.shape().h, t.shape().w, t.shape().c}},
                          {"file", file}});
        write_axtf((fs::path(dir) / file).string(), t);
    });
    manifest["params"] = params;
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("save_checkpoint: cannot write manifest");
    f << manifest.dump(2) << "\n";
}

Model load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("load_checkpoint: missing manifest in '" + dir + "'");
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("load_checkpoint: bad manifest: ") + e.what());
    }
    if (manifest.value("format", "") != "axwin-checkpoint") {
        throw IoError("load_checkpoint: not an axwin checkpoint");
    }
    const std::string dtype_str = manifest.value("dtype", "f32");
    const Dtype dtype = dtype_str == "f64" ? Dtype::F64 : Dtype::F32;
    VariantConfig cfg = variant_config(manifest.at("variant").get<std::string>(),
                                       manifest.value("num_classes", std::int64_t{1000}));
    cfg.mode = parse_attention_mode(manifest.value("attention_mode", "axwin"));
    if (manifest.contains("split_size")) {
        const auto ss = manifest["split_size"];
        for (int i = 0; i < 4; ++i) cfg.split_size[static_cast<std::size_t>(i)] = ss.at(i);
    }
    Model m = build_model(cfg, manifest.value("seed", std::uint64_t{0}), dtype);
    std::unordered_map<std::string, std::string> files;
    for (const auto& entry : manifest.at("params")) {
        files[entry.at("name").get<std::string>()] = entry.at("file").get<std::string>();
    }
    for_each_param(m, [&](const std::string& name, Tensor& t) {
        auto it = files.find(name);
        if (it == files.end()) throw IoError("load_checkpoint: manifest missing '" + name + "'");
        Tensor loaded = read_axtf((fs::path(dir) / it->second).string());
        if (!(loaded.shape() == t.shape())) {
            throw IoError("load_checkpoint: shape mismatch for '" + name + "'");
        }
        t = loaded.cast(dtype);
    });
    return m;
}

}  // namespace axwin
