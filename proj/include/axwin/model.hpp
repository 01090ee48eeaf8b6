#pragma once

#include <array>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "axwin/attention.hpp"
#include "axwin/tape.hpp"

namespace axwin {

// Full architecture description. Stage i halves the spatial extents
// (reduction fixed at 2) and runs depth[i] blocks at channels[i].
struct VariantConfig {
    std::string name = "tiny";
    std::int64_t stem_channels = 32;
    std::array<int, 4> reduction{2, 2, 2, 2};
    std::array<std::int64_t, 4> channels{64, 128, 256, 512};
    std::array<int, 4> heads{2, 4, 8, 16};
    std::array<std::int64_t, 4> split_size{7, 7, 7, 7};
    std::array<std::int64_t, 4> expand_ratio{4, 4, 4, 4};
    std::array<int, 4> depths{2, 2, 17, 2};
    std::int64_t num_classes = 1000;
    AttentionMode mode = AttentionMode::AxWin;

    // Branch count of the multi-scale embedding at stage i (0-based): 4..1.
    static int mspe_branches(int stage) { return 4 - stage; }

    void validate() const;  // throws ConfigError
};

VariantConfig variant_config(const std::string& name, std::int64_t num_classes = 1000);

struct LinearParams {
    Tensor w, b;  // (1,1,in,out), (1,1,1,out)
};
struct ConvParams {
    Tensor w, b;  // (kh,kw,c_in/groups,c_out) in the four tensor slots
    Conv2dSpec spec;
};
struct LayerNormParams {
    Tensor gamma, beta;  // (1,1,1,c)
};

struct BlockParams {
    ConvParams cpe;        // depth-wise 3x3, residual
    LayerNormParams ln1;
    LinearParams qkv;      // c -> 3c
    LinearParams attn_out; // c -> c
    LayerNormParams ln2;
    LinearParams fc1;      // c -> R*c
    ConvParams ffn_dw;     // depth-wise 3x3 on R*c
    LinearParams fc2;      // R*c -> c
};

struct MspeParams {
    // branches[i] holds i+1 stride-2 depth-wise convs.
    std::vector<std::vector<ConvParams>> branches;
    // One stride-1 depth-wise conv per top-down fusion step (deepest first).
    std::vector<ConvParams> fuse;
    ConvParams proj;  // 1x1, c -> 2c
};

struct StageParams {
    MspeParams mspe;
    std::vector<BlockParams> blocks;
};

struct Model {
    VariantConfig cfg;
    Dtype dtype = Dtype::F32;
    std::uint64_t seed = 0;
    std::array<ConvParams, 3> stem;
    std::array<StageParams, 4> stages;
    LayerNormParams head_norm;
    LinearParams head;
};

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

// Builds with truncated-normal(0.02) weights, zero biases, LN gamma 1.
Model build_variant(const std::string& name, std::int64_t num_classes, std::uint64_t seed,
                    Dtype dtype);
Model build_model(const VariantConfig& cfg, std::uint64_t seed, Dtype dtype);

// Canonical parameter traversal; the order defines init and checkpoints.
// Names: stem.conv{k}.*, stage{i}.mspe.*, stage{i}.block{j}.*, head.*.
void for_each_param(Model& m, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const Model& m,
                    const std::function<void(const std::string&, const Tensor&)>& fn);
std::int64_t parameter_count(const Model& m);

// Registers each parameter as a tape leaf on first use and reuses the Var
// afterwards, so one forward pass binds each tensor exactly once.
class ParamBinder {
  public:
    explicit ParamBinder(Tape& tape) : tape_(&tape) {}
    Var operator()(const Tensor& param);

  private:
    Tape* tape_;
    std::unordered_map<const Tensor*, Var> bound_;
};

Var cpe_forward(Tape& t, Var x, const ConvParams& cpe, ParamBinder& bind);
Var icffn_forward(Tape& t, Var x, const BlockParams& p, ParamBinder& bind);
Var axwin_block_forward(Tape& t, Var x, const BlockParams& p, const AttentionGeometry& geo,
                        ParamBinder& bind);
Var mspe_forward(Tape& t, Var x, const MspeParams& p, ParamBinder& bind);
Var stem_forward(Tape& t, Var x, const Model& m, ParamBinder& bind);

struct ForwardResult {
    std::array<Var, 4> stage_features;
    Var logits;  // (1,1,n,num_classes) view
};

ForwardResult backbone_forward(Tape& t, Var x, const Model& m, ParamBinder& bind);

// Checkpoint directory: manifest.json plus one AXTF file per parameter.
void save_checkpoint(const Model& m, const std::string& dir);
Model load_checkpoint(const std::string& dir);

}  // namespace axwin
