#pragma once

#include <functional>
#include <string>
#include <vector>

#include "peftser/tensor.hpp"

namespace peftser {

struct BackboneConfig;
struct Backbone;
struct HeadConfig;

enum class PeftKind { none, adapter, parallel_adapter, prompt, lora };

const char* peft_kind_name(PeftKind kind);
PeftKind peft_kind_from_name(const std::string& name);

struct PeftConfig {
    PeftKind kind = PeftKind::none;
    int64_t bottleneck = 128; // adapter kinds
    int64_t prompt_len = 5;   // prompt
    int64_t rank = 8;         // lora

    void validate() const;
};

// Per-layer trainable parameters of the active mechanism; unused fields stay
// undefined.
struct PeftLayerParams {
    // adapter / parallel_adapter: bottleneck pair with biases
    Tensor down_w, down_b, up_w, up_b;
    // prompt: fresh trainable rows per layer
    Tensor prompts;
    // lora: factors of the update to the first feed-forward projection
    Tensor lora_down, lora_up;
};

struct PeftState {
    PeftConfig config;
    std::vector<PeftLayerParams> layers;

    std::vector<Tensor> parameters() const;
    int64_t trainable_count() const;
};

// Fresh trainable state for `config` sized to the backbone geometry.
// Up-projections and second LoRA factors start at zero so an untrained model
// matches the hook-free forward bit for bit; down-projections use the fan-in
// uniform init and prompts start at seeded noise scaled by 0.01.
PeftState init_peft(const PeftConfig& config, const BackboneConfig& backbone, uint64_t seed);

// h + relu(h W_d + b_d) W_u + b_u, in series after the feed-forward block.
Tensor apply_adapter(const Tensor& h, const PeftLayerParams& p);

// ffn_block_out + relu(x_in W_d + b_d) W_u + b_u: the same bottleneck branch
// attached in parallel across the layer-norm + feed-forward sub-block.
Tensor apply_parallel_adapter(const Tensor& x_in, const Tensor& ffn_block_out,
                              const PeftLayerParams& p);

// Concatenates the layer's prompts ahead of the sequence, runs the layer over
// l + T positions, and discards the first l output rows.
Tensor apply_prompt(const Tensor& h, const Tensor& prompts,
                    const std::function<Tensor(const Tensor&)>& encoder_layer,
                    int64_t max_positions);

// h (W1 - W_d W_u) + b1 evaluated as h W1 - (h W_d) W_u + b1, never
// materializing the dense update during training.
Tensor apply_lora_forward(const Tensor& h, const Tensor& w1, const Tensor& b1,
                          const PeftLayerParams& p);

// Backbone copy with each first feed-forward projection replaced by
// W1 - W_d W_u; its plain forward matches the hooked forward.
Backbone merge_lora(const Backbone& b, const PeftState& lora);

struct ParamCounts {
    int64_t backbone_frozen = 0;
    int64_t peft_trainable = 0;
    int64_t head_trainable = 0;
};

// Closed-form parameter accounting; matches a tally over instantiated
// tensors. Adapter kinds: L (2 d e + e + d); prompt: L l d; lora: L r (d + f).
ParamCounts count_params(const BackboneConfig& backbone, const PeftConfig& peft,
                         const HeadConfig& head);
int64_t peft_param_count(const BackboneConfig& backbone, const PeftConfig& peft);

} // namespace peftser
