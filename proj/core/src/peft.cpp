#include "peftser/peft.hpp"

#include <cmath>

#include "peftser/backbone.hpp"
#include "peftser/head.hpp"
#include "peftser/ops.hpp"

namespace peftser {

const char* peft_kind_name(PeftKind kind) {
    switch (kind) {
    case PeftKind::none:
        return "none";
    case PeftKind::adapter:
        return "adapter";
    case PeftKind::parallel_adapter:
        return "parallel_adapter";
    case PeftKind::prompt:
        return "prompt";
    case PeftKind::lora:
        return "lora";
    }
    return "none";
}

PeftKind peft_kind_from_name(const std::string& name) {
    for (PeftKind kind : {PeftKind::none, PeftKind::adapter, PeftKind::parallel_adapter,
                          PeftKind::prompt, PeftKind::lora}) {
        if (name == peft_kind_name(kind)) {
            return kind;
        }
    }
    throw UsageError("unknown peft kind '" + name + "'");
}

void PeftConfig::validate() const {
    if ((kind == PeftKind::adapter || kind == PeftKind::parallel_adapter) && bottleneck < 1) {
        throw UsageError("peft config: bottleneck must be >= 1");
    }
    if (kind == PeftKind::prompt && prompt_len < 1) {
        throw UsageError("peft config: prompt_len must be >= 1");
    }
    if (kind == PeftKind::lora && rank < 1) {
        throw UsageError("peft config: rank must be >= 1");
    }
}

PeftState init_peft(const PeftConfig& config, const BackboneConfig& backbone, uint64_t seed) {
    config.validate();
    backbone.validate();
    Rng rng(seed);
    PeftState state;
    state.config = config;
    if (config.kind == PeftKind::none) {
        return state;
    }
    const int64_t d = backbone.hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (int64_t i = 0; i < backbone.n_layers; ++i) {
        PeftLayerParams p;
        switch (config.kind) {
        case PeftKind::adapter:
        case PeftKind::parallel_adapter:
            p.down_w = Tensor::uniform({d, config.bottleneck}, rng, -bound, bound, true);
            p.down_b = Tensor::zeros({config.bottleneck}, true);
            p.up_w = Tensor::zeros({config.bottleneck, d}, true);
            p.up_b = Tensor::zeros({d}, true);
            break;
        case PeftKind::prompt: {
            // no identity init exists for prompts; small seeded noise instead
            Tensor e = Tensor::uniform({config.prompt_len, d}, rng, -1.0, 1.0, true);
            for (double& v : e.mutable_data()) {
                v *= 0.01;
            }
            p.prompts = e;
            break;
        }
        case PeftKind::lora:
            p.lora_down = Tensor::uniform({d, config.rank}, rng, -bound, bound, true);
            p.lora_up = Tensor::zeros({config.rank, backbone.ffn_dim}, true);
            break;
        case PeftKind::none:
            break;
        }
        state.layers.push_back(std::move(p));
    }
    return state;
}

std::vector<Tensor> PeftState::parameters() const {
    std::vector<Tensor> out;
    for (const PeftLayerParams& p : layers) {
        switch (config.kind) {
        case PeftKind::adapter:
        case PeftKind::parallel_adapter:
            out.push_back(p.down_w);
            out.push_back(p.down_b);
            out.push_back(p.up_w);
            out.push_back(p.up_b);
            break;
        case PeftKind::prompt:
            out.push_back(p.prompts);
            break;
        case PeftKind::lora:
            out.push_back(p.lora_down);
            out.push_back(p.lora_up);
            break;
        case PeftKind::none:
            break;
        }
    }
    return out;
}

int64_t PeftState::trainable_count() const {
    int64_t n = 0;
    for (const Tensor& t : parameters()) {
        n += t.size();
    }
    return n;
}

Tensor apply_adapter(const Tensor& h, const PeftLayerParams& p) {
    Tensor branch = matmul(relu(add(matmul(h, p.down_w), p.down_b)), p.up_w);
    return add(add(h, branch), p.up_b);
}

Tensor apply_parallel_adapter(const Tensor& x_in, const Tensor& ffn_block_out,
                              const PeftLayerParams& p) {
    if (x_in.shape() != ffn_block_out.shape()) {
        throw DimensionError("parallel adapter: branch input " + shape_str(x_in.shape()) +
                             " vs block output " + shape_str(ffn_block_out.shape()));
    }
    Tensor branch = matmul(relu(add(matmul(x_in, p.down_w), p.down_b)), p.up_w);
    return add(add(ffn_block_out, branch), p.up_b);
}

Tensor apply_prompt(const Tensor& h, const Tensor& prompts,
                    const std::function<Tensor(const Tensor&)>& encoder_layer,
                    int64_t max_positions) {
    const int64_t l = prompts.dim(0);
    const int64_t t = h.dim(0);
    if (l + t > max_positions) {
        throw CapacityError("apply_prompt: " + std::to_string(l) + " prompts + " +
                            std::to_string(t) + " frames exceed max_positions " +
                            std::to_string(max_positions));
    }
    Tensor with_prompts = concat_rows(prompts, h);
    Tensor out = encoder_layer(with_prompts);
    return slice_rows(out, l, t);
}

Tensor apply_lora_forward(const Tensor& h, const Tensor& w1, const Tensor& b1,
                          const PeftLayerParams& p) {
    Tensor base = matmul(h, w1);
    Tensor update = matmul(matmul(h, p.lora_down), p.lora_up);
    return add(sub(base, update), b1);
}

Backbone merge_lora(const Backbone& b, const PeftState& lora) {
    if (lora.config.kind != PeftKind::lora) {
        throw UsageError(std::string("merge_lora: state holds '") +
                         peft_kind_name(lora.config.kind) + "', not 'lora'");
    }
    if (static_cast<int64_t>(lora.layers.size()) != b.config.n_layers) {
        throw UsageError("merge_lora: layer count mismatch");
    }
    Backbone merged;
    merged.config = b.config;
    merged.frozen = b.frozen;
    merged.frontend_w = b.frontend_w.clone();
    merged.frontend_b = b.frontend_b.clone();
    merged.pos_emb = b.pos_emb.clone();
    const int64_t d = b.config.hidden, f = b.config.ffn_dim;
    for (size_t i = 0; i < b.layers.size(); ++i) {
        const EncoderLayer& src = b.layers[i];
        EncoderLayer out;
        out.ln1_gain = src.ln1_gain.clone();
        out.ln1_bias = src.ln1_bias.clone();
        out.wq = src.wq.clone();
        out.bq = src.bq.clone();
        out.wk = src.wk.clone();
        out.bk = src.bk.clone();
        out.wv = src.wv.clone();
        out.bv = src.bv.clone();
        out.wo = src.wo.clone();
        out.bo = src.bo.clone();
        out.ln2_gain = src.ln2_gain.clone();
        out.ln2_bias = src.ln2_bias.clone();
        out.w1 = src.w1.clone();
        out.b1 = src.b1.clone();
        out.w2 = src.w2.clone();
        out.b2 = src.b2.clone();

        const PeftLayerParams& p = lora.layers[i];
        const int64_t r = p.lora_down.dim(1);
        std::vector<double> update(static_cast<size_t>(d * f), 0.0);
        kernels::matmul_nn(p.lora_down.data().data(), p.lora_up.data().data(), update.data(),
                           d, r, f);
        auto w1_data = out.w1.mutable_data();
        for (int64_t j = 0; j < d * f; ++j) {
            w1_data[static_cast<size_t>(j)] -= update[static_cast<size_t>(j)];
        }
        merged.layers.push_back(std::move(out));
    }
    return merged;
}

int64_t peft_param_count(const BackboneConfig& backbone, const PeftConfig& peft) {
    const int64_t layers = backbone.n_layers, d = backbone.hidden;
    switch (peft.kind) {
    case PeftKind::none:
        return 0;
    case PeftKind::adapter:
    case PeftKind::parallel_adapter:
        return layers * (2 * d * peft.bottleneck + peft.bottleneck + d);
    case PeftKind::prompt:
        return layers * peft.prompt_len * d;
    case PeftKind::lora:
        return layers * peft.rank * (d + backbone.ffn_dim);
    }
    return 0;
}

ParamCounts count_params(const BackboneConfig& backbone, const PeftConfig& peft,
                         const HeadConfig& head) {
    backbone.validate();
    peft.validate();
    head.validate();
    ParamCounts counts;
    counts.backbone_frozen = backbone_param_count(backbone);
    counts.peft_trainable = peft_param_count(backbone, peft);
    counts.head_trainable = head_param_count(head);
    return counts;
}

} // namespace peftser
