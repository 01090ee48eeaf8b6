#pragma once

#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "axwin/kernels.hpp"
#include "axwin/partition.hpp"
#include "axwin/tensor.hpp"

namespace axwin {

// Handle to a node on a Tape.
struct Var {
    int id = -1;
};

enum class OpKind {
    Leaf,
    Matmul,
    Conv2d,
    Softmax,
    LayerNorm,
    Gelu,
    Upsample2x,
    PadSpatial,
    CropSpatial,
    Regroup,
    SliceChannels,
    ConcatChannels,
    Add,
    Mul,
    AddBias,
    Scale,
    Reshape,
    GlobalAvgPool,
    SumAll,
    SoftmaxXent,
};

struct MatmulAttrs {
    bool transpose_b = false;
};
struct ConvAttrs {
    Conv2dSpec spec;
};
struct LayerNormAttrs {
    double eps = 1e-5;
};
struct RegroupAttrs {
    std::shared_ptr<const RegroupSpec> spec;
};
struct SliceAttrs {
    std::int64_t c0 = 0, c1 = 0;
};
struct ScaleAttrs {
    double factor = 1.0;
};
struct ReshapeAttrs {
    Shape to;
};
struct SpatialAttrs {
    std::int64_t to_h = 0, to_w = 0;
};
struct XentAttrs {
    std::vector<int> labels;
};
using OpAttrs = std::variant<std::monostate, MatmulAttrs, ConvAttrs, LayerNormAttrs, RegroupAttrs,
                             SliceAttrs, ScaleAttrs, ReshapeAttrs, SpatialAttrs, XentAttrs>;

struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<int> inputs;
    OpAttrs attrs;
    Tensor out;
};

// Recorded forward graph. Nodes are appended in evaluation order, so the
// list is already topologically sorted; backward() walks it in reverse.
// One tape per forward pass; not shared across threads.
class Tape {
  public:
    Var leaf(const Tensor& value);

    Var matmul(Var a, Var b, bool transpose_b = false);
    Var conv2d(Var x, Var weight, Var bias, const Conv2dSpec& spec);
    Var softmax(Var x);
    Var layer_norm(Var x, Var gamma, Var beta, double eps);
    Var gelu(Var x);
    Var upsample2x(Var x);
    Var pad_spatial(Var x, std::int64_t to_h, std::int64_t to_w);
    Var crop_spatial(Var x, std::int64_t to_h, std::int64_t to_w);
    Var regroup(Var x, std::shared_ptr<const RegroupSpec> spec);
    Var slice_channels(Var x, std::int64_t c0, std::int64_t c1);
    Var concat_channels(const std::vector<Var>& parts);
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var add_bias(Var x, Var bias);
    Var scale(Var x, double factor);
    Var reshape(Var x, Shape to);
    Var global_avg_pool(Var x);
    Var sum_all(Var x);
    Var softmax_cross_entropy(Var logits, std::vector<int> labels);

    const Tensor& value(Var v) const { return node(v).out; }
    std::size_t size() const { return nodes_.size(); }

    // Reverse-mode accumulation from a scalar loss. Gradients for every
    // node reachable from the loss become available through grad().
    void backward(Var loss);
    bool has_grad(Var v) const;
    const Tensor& grad(Var v) const;

    // Recomputes every non-leaf node from the recorded leaves and verifies
    // the results are bit-identical to the stored activations.
    bool replay_matches() const;

  private:
    std::vector<Node> nodes_;
    std::vector<std::optional<Tensor>> grads_;

    const Node& node(Var v) const;
    Var push(Node node);
    Var record(OpKind kind, std::vector<int> inputs, OpAttrs attrs);
    Tensor eval(const Node& node, const std::vector<const Tensor*>& in) const;
    void accumulate(int id, const Tensor& g);
};

}  // namespace axwin
