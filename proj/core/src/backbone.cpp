#include "peftser/backbone.hpp"

#include <cmath>

#include "peftser/ops.hpp"

namespace peftser {

void BackboneConfig::validate() const {
    if (n_layers < 1 || hidden < 1 || n_heads < 1 || ffn_dim < 1 || max_positions < 1 ||
        frontend_in < 1) {
        throw UsageError("backbone config: all counts must be >= 1");
    }
    if (hidden % n_heads != 0) {
        throw UsageError("backbone config: hidden " + std::to_string(hidden) +
                         " not divisible by n_heads " + std::to_string(n_heads));
    }
}

BackboneConfig preset_config(const std::string& name) {
    if (name == "toy") {
        return {2, 32, 2, 64, 512, 8};
    }
    if (name == "whisper-tiny-geom") {
        return {4, 384, 6, 1536, 512, 80};
    }
    if (name == "whisper-base-geom") {
        return {6, 512, 8, 2048, 512, 80};
    }
    if (name == "whisper-small-geom") {
        return {12, 768, 12, 3072, 512, 80};
    }
    if (name == "w2v2-base-geom") {
        return {12, 768, 12, 3072, 512, 80};
    }
    if (name == "wavlm-base-plus-geom") {
        return {12, 768, 12, 3072, 512, 80};
    }
    throw UsageError("unknown backbone preset '" + name + "'");
}

std::vector<std::string> preset_names() {
    return {"toy",
            "whisper-tiny-geom",
            "whisper-base-geom",
            "whisper-small-geom",
            "w2v2-base-geom",
            "wavlm-base-plus-geom"};
}

namespace {

Tensor fan_in_uniform(Shape shape, int64_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), rng, -bound, bound, true);
}

} // namespace

Backbone build_backbone(const BackboneConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed);
    Backbone b;
    b.config = config;
    const int64_t d = config.hidden;
    b.frontend_w = fan_in_uniform({config.frontend_in, d}, config.frontend_in, rng);
    b.frontend_b = fan_in_uniform({d}, config.frontend_in, rng);
    b.pos_emb = fan_in_uniform({config.max_positions, d}, d, rng);
    for (int64_t i = 0; i < config.n_layers; ++i) {
        EncoderLayer layer;
        layer.ln1_gain = Tensor::full({d}, 1.0, true);
        layer.ln1_bias = Tensor::zeros({d}, true);
        layer.wq = fan_in_uniform({d, d}, d, rng);
        layer.bq = fan_in_uniform({d}, d, rng);
        layer.wk = fan_in_uniform({d, d}, d, rng);
        layer.bk = fan_in_uniform({d}, d, rng);
        layer.wv = fan_in_uniform({d, d}, d, rng);
        layer.bv = fan_in_uniform({d}, d, rng);
        layer.wo = fan_in_uniform({d, d}, d, rng);
        layer.bo = fan_in_uniform({d}, d, rng);
        layer.ln2_gain = Tensor::full({d}, 1.0, true);
        layer.ln2_bias = Tensor::zeros({d}, true);
        layer.w1 = fan_in_uniform({d, config.ffn_dim}, d, rng);
        layer.b1 = fan_in_uniform({config.ffn_dim}, d, rng);
        layer.w2 = fan_in_uniform({config.ffn_dim, d}, config.ffn_dim, rng);
        layer.b2 = fan_in_uniform({d}, config.ffn_dim, rng);
        b.layers.push_back(std::move(layer));
    }
    return b;
}

std::vector<Tensor> Backbone::parameters() const {
    std::vector<Tensor> out = {frontend_w, frontend_b, pos_emb};
    for (const EncoderLayer& l : layers) {
        for (const Tensor* t : {&l.ln1_gain, &l.ln1_bias, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv,
                                &l.bv, &l.wo, &l.bo, &l.ln2_gain, &l.ln2_bias, &l.w1, &l.b1,
                                &l.w2, &l.b2}) {
            out.push_back(*t);
        }
    }
    return out;
}

void freeze(Backbone& b) {
    for (Tensor t : b.parameters()) {
        t.set_requires_grad(false);
    }
    b.frozen = true;
}

uint64_t parameter_checksum(const Backbone& b) { return data_checksum(b.parameters()); }

Tensor encoder_layer_forward(const EncoderLayer& layer, const BackboneConfig& config,
                             const Tensor& z, const PeftLayerParams* hook, PeftKind kind) {
    const int64_t heads = config.n_heads;
    const int64_t head_dim = config.hidden / heads;

    // attention sub-block
    Tensor normed = layer_norm(z, layer.ln1_gain, layer.ln1_bias);
    Tensor q = add(matmul(normed, layer.wq), layer.bq);
    Tensor k = add(matmul(normed, layer.wk), layer.bk);
    Tensor v = add(matmul(normed, layer.wv), layer.bv);
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (int64_t h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * head_dim, head_dim);
        Tensor kh = slice_cols(k, h * head_dim, head_dim);
        Tensor vh = slice_cols(v, h * head_dim, head_dim);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        Tensor att = softmax(scores, -1);
        head_outs.push_back(matmul(att, vh));
    }
    Tensor attended = concat_cols(head_outs);
    Tensor attn_out = add(matmul(attended, layer.wo), layer.bo);
    Tensor x = add(z, attn_out);

    // feed-forward sub-block; x is the parallel adapter's tap point
    Tensor ffn_in = layer_norm(x, layer.ln2_gain, layer.ln2_bias);
    Tensor pre = (kind == PeftKind::lora && hook)
                     ? apply_lora_forward(ffn_in, layer.w1, layer.b1, *hook)
                     : add(matmul(ffn_in, layer.w1), layer.b1);
    Tensor ffn_out = add(matmul(gelu(pre), layer.w2), layer.b2);
    Tensor out = add(x, ffn_out);

    if (hook && kind == PeftKind::adapter) {
        out = apply_adapter(out, *hook);
    } else if (hook && kind == PeftKind::parallel_adapter) {
        out = apply_parallel_adapter(x, out, *hook);
    }
    return out;
}

std::vector<Tensor> backbone_forward(const Backbone& b, const Tensor& frames,
                                     const PeftState* peft) {
    if (frames.rank() != 2 || frames.dim(1) != b.config.frontend_in) {
        throw DimensionError("backbone_forward: frames " + shape_str(frames.shape()) +
                             " do not match frontend width " +
                             std::to_string(b.config.frontend_in));
    }
    const int64_t t = frames.dim(0);
    if (t > b.config.max_positions) {
        throw CapacityError("backbone_forward: " + std::to_string(t) +
                            " frames exceed max_positions " +
                            std::to_string(b.config.max_positions));
    }
    const PeftKind kind = peft ? peft->config.kind : PeftKind::none;
    if (kind != PeftKind::none &&
        static_cast<int64_t>(peft->layers.size()) != b.config.n_layers) {
        throw UsageError("backbone_forward: peft state has " +
                         std::to_string(peft->layers.size()) + " layers, backbone " +
                         std::to_string(b.config.n_layers));
    }

    Tensor x = add(matmul(frames, b.frontend_w), b.frontend_b);
    x = add(x, slice_rows(b.pos_emb, 0, t));

    std::vector<Tensor> hidden_states;
    hidden_states.reserve(static_cast<size_t>(b.config.n_layers));
    for (int64_t i = 0; i < b.config.n_layers; ++i) {
        const EncoderLayer& layer = b.layers[static_cast<size_t>(i)];
        const PeftLayerParams* hook =
            kind == PeftKind::none ? nullptr : &peft->layers[static_cast<size_t>(i)];
        if (kind == PeftKind::prompt) {
            x = apply_prompt(
                x, hook->prompts,
                [&](const Tensor& z) {
                    return encoder_layer_forward(layer, b.config, z, nullptr, PeftKind::none);
                },
                b.config.max_positions);
        } else {
            x = encoder_layer_forward(layer, b.config, x, hook, kind);
        }
        hidden_states.push_back(x);
    }
    return hidden_states;
}

int64_t backbone_param_count(const BackboneConfig& c) {
    const int64_t d = c.hidden, f = c.ffn_dim;
    const int64_t frontend = c.frontend_in * d + d;
    const int64_t positions = c.max_positions * d;
    const int64_t attention = 4 * (d * d + d);
    const int64_t norms = 4 * d;
    const int64_t ffn = (d * f + f) + (f * d + d);
    return frontend + positions + c.n_layers * (attention + norms + ffn);
}

} // namespace peftser
