#pragma once

#include <string>
#include <vector>

#include "peftser/peft.hpp"
#include "peftser/tensor.hpp"

namespace peftser {

struct BackboneConfig {
    int64_t n_layers = 2;
    int64_t hidden = 32;
    int64_t n_heads = 2;
    int64_t ffn_dim = 64;
    int64_t max_positions = 512;
    int64_t frontend_in = 8;

    void validate() const; // hidden divisible by n_heads, all counts >= 1
};

// Geometry presets. The *-geom names carry random weights sized like the
// published encoders; "toy" is the small default used across the test suite.
// whisper-tiny-geom adopts hidden 384 and whisper-base-geom 6 layers: those
// are the unique geometries that reproduce the reference trainable-parameter
// table exactly.
BackboneConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

// Pre-norm encoder layer: z + Attn(LN1(z)), then z + FFN(LN2(z)).
struct EncoderLayer {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1; // hidden -> ffn_dim
    Tensor w2, b2; // ffn_dim -> hidden
};

struct Backbone {
    BackboneConfig config;
    Tensor frontend_w, frontend_b; // frontend_in -> hidden
    Tensor pos_emb;                // max_positions x hidden, learned, frozen with the rest
    std::vector<EncoderLayer> layers;
    bool frozen = false;

    std::vector<Tensor> parameters() const;
};

// Parameters drawn from seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in));
// layer-norm gains start at 1 and biases at 0.
Backbone build_backbone(const BackboneConfig& config, uint64_t seed);

// Drops every backbone parameter out of gradient computation.
void freeze(Backbone& b);

uint64_t parameter_checksum(const Backbone& b);

// Runs frames [T x frontend_in] through the frontend projection, positional
// embeddings, and every encoder layer with the PEFT hooks applied; returns
// each layer's output in order, all [T x hidden] (prompt rows excluded).
std::vector<Tensor> backbone_forward(const Backbone& b, const Tensor& frames,
                                     const PeftState* peft = nullptr);

// One layer over z [S x hidden] with an optional per-layer hook of `kind`
// (prompt handling lives in backbone_forward).
Tensor encoder_layer_forward(const EncoderLayer& layer, const BackboneConfig& config,
                             const Tensor& z, const PeftLayerParams* hook, PeftKind kind);

int64_t backbone_param_count(const BackboneConfig& config);

} // namespace peftser
