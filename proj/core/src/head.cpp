#include "peftser/head.hpp"

#include <cmath>

#include "peftser/ops.hpp"

namespace peftser {

void HeadConfig::validate() const {
    if (n_layers_in < 1 || hidden_in < 1 || conv_dim < 1 || n_classes < 2) {
        throw UsageError("head config: need n_layers_in, hidden_in, conv_dim >= 1 and >= 2 classes");
    }
}

namespace {

Tensor fan_in_uniform(Shape shape, int64_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), rng, -bound, bound, true);
}

} // namespace

HeadState init_head(const HeadConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed);
    HeadState s;
    s.config = config;
    const int64_t c = config.conv_dim;
    // zero logits give uniform averaging weights at init
    s.layer_logits = Tensor::zeros({config.n_layers_in}, true);
    s.conv1_w = fan_in_uniform({config.hidden_in, c}, config.hidden_in, rng);
    s.conv1_b = fan_in_uniform({c}, config.hidden_in, rng);
    s.conv2_w = fan_in_uniform({c, c}, c, rng);
    s.conv2_b = fan_in_uniform({c}, c, rng);
    s.conv3_w = fan_in_uniform({c, c}, c, rng);
    s.conv3_b = fan_in_uniform({c}, c, rng);
    s.fc1_w = fan_in_uniform({c, c}, c, rng);
    s.fc1_b = fan_in_uniform({c}, c, rng);
    s.fc2_w = fan_in_uniform({c, config.n_classes}, c, rng);
    s.fc2_b = fan_in_uniform({config.n_classes}, c, rng);
    return s;
}

std::vector<Tensor> HeadState::parameters() const {
    return {layer_logits, conv1_w, conv1_b, conv2_w, conv2_b, conv3_w,
            conv3_b,      fc1_w,   fc1_b,   fc2_w,   fc2_b};
}

int64_t HeadState::trainable_count() const {
    int64_t n = 0;
    for (const Tensor& t : parameters()) {
        n += t.size();
    }
    return n;
}

Tensor averaging_weights(const HeadState& s) { return softmax(s.layer_logits, 0); }

Tensor head_forward(const std::vector<Tensor>& hiddens, const HeadState& s) {
    if (static_cast<int64_t>(hiddens.size()) != s.config.n_layers_in) {
        throw UsageError("head_forward: got " + std::to_string(hiddens.size()) +
                         " layer outputs, expected " + std::to_string(s.config.n_layers_in));
    }
    for (const Tensor& h : hiddens) {
        if (h.rank() != 2 || h.dim(1) != s.config.hidden_in ||
            h.dim(0) != hiddens.front().dim(0)) {
            throw DimensionError("head_forward: layer output " + shape_str(h.shape()) +
                                 " incompatible with " + shape_str(hiddens.front().shape()));
        }
    }

    Tensor weights = averaging_weights(s);
    Tensor averaged = mul(hiddens[0], slice_rows(weights, 0, 1));
    for (size_t i = 1; i < hiddens.size(); ++i) {
        averaged = add(averaged, mul(hiddens[i], slice_rows(weights, static_cast<int64_t>(i), 1)));
    }

    // point-wise convolutions are per-frame linear maps
    Tensor x = relu(add(matmul(averaged, s.conv1_w), s.conv1_b));
    x = relu(add(matmul(x, s.conv2_w), s.conv2_b));
    x = add(matmul(x, s.conv3_w), s.conv3_b);

    Tensor pooled = reshape(mean(x, 0), {1, s.config.conv_dim});
    Tensor f = relu(add(matmul(pooled, s.fc1_w), s.fc1_b));
    Tensor logits = add(matmul(f, s.fc2_w), s.fc2_b);
    return reshape(logits, {s.config.n_classes});
}

int64_t head_param_count(const HeadConfig& config) {
    const int64_t c = config.conv_dim, k = config.n_classes;
    return config.n_layers_in + (config.hidden_in * c + c) + 2 * (c * c + c) + (c * c + c) +
           (c * k + k);
}

} // namespace peftser
