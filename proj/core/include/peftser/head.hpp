#pragma once

#include <vector>

#include "peftser/tensor.hpp"

namespace peftser {

struct HeadConfig {
    int64_t n_layers_in = 12;
    int64_t hidden_in = 768;
    int64_t conv_dim = 256;
    int64_t n_classes = 4;

    void validate() const;
};

// Downstream classifier: trainable softmax-weighted average over all encoder
// layer outputs, three point-wise (kernel size 1) convolutions with ReLU in
// between, temporal mean pooling, then two fully connected layers.
struct HeadState {
    HeadConfig config;
    Tensor layer_logits; // softmax-normalized into averaging weights
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor conv3_w, conv3_b;
    Tensor fc1_w, fc1_b;
    Tensor fc2_w, fc2_b;

    std::vector<Tensor> parameters() const;
    int64_t trainable_count() const;
};

HeadState init_head(const HeadConfig& config, uint64_t seed);

// softmax(layer_logits): nonnegative, sums to 1.
Tensor averaging_weights(const HeadState& s);

Tensor head_forward(const std::vector<Tensor>& hiddens, const HeadState& s);

// n + (hidden c + c) + 2 (c^2 + c) + (c^2 + c) + (c K + K)
int64_t head_param_count(const HeadConfig& config);

} // namespace peftser
