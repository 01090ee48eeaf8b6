#include "axwin/tape.hpp"

#include <string>

namespace axwin {

const Node& Tape::node(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw DimensionError("tape: invalid node id " + std::to_string(v.id));
    }
    return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::eval(const Node& n, const std::vector<const Tensor*>& in) const {
    switch (n.kind) {
        case OpKind::Leaf:
            return n.out;
        case OpKind::Matmul:
            return axwin::matmul(*in[0], *in[1], false, std::get<MatmulAttrs>(n.attrs).transpose_b);
        case OpKind::Conv2d:
            return axwin::conv2d(*in[0], *in[1], *in[2], std::get<ConvAttrs>(n.attrs).spec);
        case OpKind::Softmax:
            return softmax_lastaxis(*in[0]);
        case OpKind::LayerNorm:
            return axwin::layer_norm(*in[0], *in[1], *in[2], std::get<LayerNormAttrs>(n.attrs).eps);
        case OpKind::Gelu:
            return axwin::gelu(*in[0]);
        case OpKind::Upsample2x:
            return bilinear_upsample_x2(*in[0]);
        case OpKind::PadSpatial: {
            const auto& a = std::get<SpatialAttrs>(n.attrs);
            return axwin::pad_spatial(*in[0], a.to_h, a.to_w);
        }
        case OpKind::CropSpatial: {
            const auto& a = std::get<SpatialAttrs>(n.attrs);
            return axwin::crop_spatial(*in[0], a.to_h, a.to_w);
        }
        case OpKind::Regroup:
            return apply_regroup(*in[0], *std::get<RegroupAttrs>(n.attrs).spec);
        case OpKind::SliceChannels: {
            const auto& a = std::get<SliceAttrs>(n.attrs);
            return axwin::slice_channels(*in[0], a.c0, a.c1);
        }
        case OpKind::ConcatChannels: {
            std::vector<Tensor> parts;
            parts.reserve(in.size());
            for (const Tensor* t : in) parts.push_back(*t);
            return axwin::concat_channels(parts);
        }
        case OpKind::Add:
            return axwin::add(*in[0], *in[1]);
        case OpKind::Mul:
            return axwin::mul(*in[0], *in[1]);
        case OpKind::AddBias:
            return axwin::add_bias(*in[0], *in[1]);
        case OpKind::Scale:
            return axwin::scale(*in[0], std::get<ScaleAttrs>(n.attrs).factor);
        case OpKind::Reshape:
            return in[0]->reshaped(std::get<ReshapeAttrs>(n.attrs).to);
        case OpKind::GlobalAvgPool:
            return axwin::global_avg_pool(*in[0]);
        case OpKind::SumAll:
            return axwin::sum_all(*in[0]);
        case OpKind::SoftmaxXent:
            return axwin::softmax_cross_entropy(*in[0], std::get<XentAttrs>(n.attrs).labels);
    }
    throw UnsupportedOpError("tape: unknown op kind in eval");
}

Var Tape::leaf(const Tensor& value) {
    Node n;
    n.kind = OpKind::Leaf;
    n.out = value;
    return push(std::move(n));
}

Var Tape::record(OpKind kind, std::vector<int> inputs, OpAttrs attrs) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.attrs = std::move(attrs);
    std::vector<const Tensor*> in;
    in.reserve(n.inputs.size());
    for (int id : n.inputs) in.push_back(&node(Var{id}).out);
    n.out = eval(n, in);
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b, bool transpose_b) {
    return record(OpKind::Matmul, {a.id, b.id}, MatmulAttrs{transpose_b});
}
Var Tape::conv2d(Var x, Var weight, Var bias, const Conv2dSpec& spec) {
    return record(OpKind::Conv2d, {x.id, weight.id, bias.id}, ConvAttrs{spec});
}
Var Tape::softmax(Var x) { return record(OpKind::Softmax, {x.id}, std::monostate{}); }
Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    return record(OpKind::LayerNorm, {x.id, gamma.id, beta.id}, LayerNormAttrs{eps});
}
Var Tape::gelu(Var x) { return record(OpKind::Gelu, {x.id}, std::monostate{}); }
Var Tape::upsample2x(Var x) { return record(OpKind::Upsample2x, {x.id}, std::monostate{}); }
Var Tape::pad_spatial(Var x, std::int64_t to_h, std::int64_t to_w) {
    return record(OpKind::PadSpatial, {x.id}, SpatialAttrs{to_h, to_w});
}
Var Tape::crop_spatial(Var x, std::int64_t to_h, std::int64_t to_w) {
    return record(OpKind::CropSpatial, {x.id}, SpatialAttrs{to_h, to_w});
}
Var Tape::regroup(Var x, std::shared_ptr<const RegroupSpec> spec) {
    return record(OpKind::Regroup, {x.id}, RegroupAttrs{std::move(spec)});
}
Var Tape::slice_channels(Var x, std::int64_t c0, std::int64_t c1) {
    return record(OpKind::SliceChannels, {x.id}, SliceAttrs{c0, c1});
}
Var Tape::concat_channels(const std::vector<Var>& parts) {
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (Var v : parts) ids.push_back(v.id);
    return record(OpKind::ConcatChannels, std::move(ids), std::monostate{});
}
Var Tape::add(Var a, Var b) { return record(OpKind::Add, {a.id, b.id}, std::monostate{}); }
Var Tape::mul(Var a, Var b) { return record(OpKind::Mul, {a.id, b.id}, std::monostate{}); }
Var Tape::add_bias(Var x, Var bias) {
    return record(OpKind::AddBias, {x.id, bias.id}, std::monostate{});
}
Var Tape::scale(Var x, double factor) {
    return record(OpKind::Scale, {x.id}, ScaleAttrs{factor});
}
Var Tape::reshape(Var x, Shape to) { return record(OpKind::Reshape, {x.id}, ReshapeAttrs{to}); }
Var Tape::global_avg_pool(Var x) {
    return record(OpKind::GlobalAvgPool, {x.id}, std::monostate{});
}
Var Tape::sum_all(Var x) { return record(OpKind::SumAll, {x.id}, std::monostate{}); }
Var Tape::softmax_cross_entropy(Var logits, std::vector<int> labels) {
    return record(OpKind::SoftmaxXent, {logits.id}, XentAttrs{std::move(labels)});
}

bool Tape::has_grad(Var v) const {
    return v.id >= 0 && v.id < static_cast<int>(grads_.size()) &&
           grads_[static_cast<std::size_t>(v.id)].has_value();
}

const Tensor& Tape::grad(Var v) const {
    if (!has_grad(v)) {
        throw DimensionError("tape: no gradient recorded for node " + std::to_string(v.id));
    }
    return *grads_[static_cast<std::size_t>(v.id)];
}

void Tape::accumulate(int id, const Tensor& g) {
    auto& slot = grads_[static_cast<std::size_t>(id)];
    if (!slot.has_value()) {
        slot = g.clone();
    } else {
        *slot = axwin::add(*slot, g);
    }
}

void Tape::backward(Var loss) {
    const Node& l = node(loss);
    if (l.out.numel() != 1) {
        throw DimensionError("backward: loss must be scalar, got " + l.out.shape().str());
    }
    grads_.assign(nodes_.size(), std::nullopt);
    grads_[static_cast<std::size_t>(loss.id)] = Tensor::full(l.out.shape(), l.out.dtype(), 1.0);

    for (int id = loss.id; id >= 0; --id) {
        const auto& slot = grads_[static_cast<std::size_t>(id)];
        if (!slot.has_value()) continue;
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.kind == OpKind::Leaf) continue;
        const Tensor& g = *slot;
        std::vector<const Tensor*> in;
        in.reserve(n.inputs.size());
        for (int i : n.inputs) in.push_back(&nodes_[static_cast<std::size_t>(i)].out);

        switch (n.kind) {
            case OpKind::Matmul: {
                const bool tb = std::get<MatmulAttrs>(n.attrs).transpose_b;
                const Tensor& a = *in[0];
                const Tensor& b = *in[1];
                // y = a.b (or a.b^T). Accumulating matmuls reduce over the
                // batch axis when the operand was broadcast.
                Tensor ga(a.shape(), a.dtype());
                matmul_acc(g, b, false, !tb, ga);
                accumulate(n.inputs[0], ga);
                Tensor gb(b.shape(), b.dtype());
                if (tb) {
                    matmul_acc(g, a, true, false, gb);
                } else {
                    matmul_acc(a, g, true, false, gb);
                }
                accumulate(n.inputs[1], gb);
                break;
            }
            case OpKind::Conv2d: {
                const auto& spec = std::get<ConvAttrs>(n.attrs).spec;
                const Tensor& x = *in[0];
                const Tensor& w = *in[1];
                Tensor gx(x.shape(), x.dtype());
                Tensor gw(w.shape(), w.dtype());
                Tensor gb(in[2]->shape(), in[2]->dtype());
                conv2d_backward(x, w, spec, g, &gx, &gw, &gb);
                accumulate(n.inputs[0], gx);
                accumulate(n.inputs[1], gw);
                accumulate(n.inputs[2], gb);
                break;
            }
            case OpKind::Softmax:
                accumulate(n.inputs[0], softmax_lastaxis_backward(n.out, g));
                break;
            case OpKind::LayerNorm: {
                const double eps = std::get<LayerNormAttrs>(n.attrs).eps;
                Tensor gx(in[0]->shape(), in[0]->dtype());
                Tensor ggamma(in[1]->shape(), in[1]->dtype());
                Tensor gbeta(in[2]->shape(), in[2]->dtype());
                layer_norm_backward(*in[0], *in[1], eps, g, &gx, &ggamma, &gbeta);
                accumulate(n.inputs[0], gx);
                accumulate(n.inputs[1], ggamma);
                accumulate(n.inputs[2], gbeta);
                break;
            }
            case OpKind::Gelu:
                accumulate(n.inputs[0], gelu_backward(*in[0], g));
                break;
            case OpKind::Upsample2x:
                accumulate(n.inputs[0], bilinear_upsample_x2_backward(in[0]->shape(), g));
                break;
            case OpKind::PadSpatial: {
                const auto& x = *in[0];
                accumulate(n.inputs[0], axwin::crop_spatial(g, x.shape().h, x.shape().w));
                break;
            }
            case OpKind::CropSpatial: {
                const auto& x = *in[0];
                accumulate(n.inputs[0], axwin::pad_spatial(g, x.shape().h, x.shape().w));
                break;
            }
            case OpKind::Regroup: {
                Tensor gx(in[0]->shape(), in[0]->dtype());
                apply_regroup_backward_acc(g, *std::get<RegroupAttrs>(n.attrs).spec, gx);
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::SliceChannels: {
                const auto& a = std::get<SliceAttrs>(n.attrs);
                Tensor gx(in[0]->shape(), in[0]->dtype());
                slice_channels_backward_acc(g, a.c0, gx);
                accumulate(n.inputs[0], gx);
                break;
            }
            case OpKind::ConcatChannels: {
                std::int64_t offset = 0;
                for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                    const std::int64_t width = in[i]->shape().c;
                    accumulate(n.inputs[i], axwin::slice_channels(g, offset, offset + width));
                    offset += width;
                }
                break;
            }
            case OpKind::Add:
                accumulate(n.inputs[0], g);
                accumulate(n.inputs[1], g);
                break;
            case OpKind::Mul:
                accumulate(n.inputs[0], axwin::mul(g, *in[1]));
                accumulate(n.inputs[1], axwin::mul(g, *in[0]));
                break;
            case OpKind::AddBias:
                accumulate(n.inputs[0], g);
                accumulate(n.inputs[1], channel_bias_grad(g));
                break;
            case OpKind::Scale:
                accumulate(n.inputs[0], axwin::scale(g, std::get<ScaleAttrs>(n.attrs).factor));
                break;
            case OpKind::Reshape:
                accumulate(n.inputs[0], g.reshaped(in[0]->shape()));
                break;
            case OpKind::GlobalAvgPool:
                accumulate(n.inputs[0], global_avg_pool_backward(in[0]->shape(), g));
                break;
            case OpKind::SumAll:
                accumulate(n.inputs[0],
                           Tensor::full(in[0]->shape(), in[0]->dtype(), g.get(0)));
                break;
            case OpKind::SoftmaxXent:
                accumulate(n.inputs[0],
                           softmax_cross_entropy_backward(
                               *in[0], std::get<XentAttrs>(n.attrs).labels, g.get(0)));
                break;
            default:
                throw UnsupportedOpError("backward: no adjoint registered for op kind " +
                                         std::to_string(static_cast<int>(n.kind)));
        }
    }
}

bool Tape::replay_matches() const {
    std::vector<Tensor> values;
    values.reserve(nodes_.size());
    for (const Node& n : nodes_) {
        if (n.kind == OpKind::Leaf) {
            values.push_back(n.out);
            continue;
        }
        std::vector<const Tensor*> in;
        in.reserve(n.inputs.size());
        for (int i : n.inputs) in.push_back(&values[static_cast<std::size_t>(i)]);
        Tensor v = eval(n, in);
        if (!v.same_bits(n.out)) return false;
        values.push_back(std::move(v));
    }
    return true;
}

}  // namespace axwin
