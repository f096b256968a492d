#include "peftser/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "peftser/ops.hpp"
#include "peftser/trainer.hpp"

namespace peftser {

double gradcheck_model(const BackboneConfig& backbone_cfg, const HeadConfig& head_cfg,
                       const PeftConfig& peft_cfg, uint64_t seed,
                       int64_t directions_per_tensor, double step) {
    Rng rng(seed);
    Backbone backbone = build_backbone(backbone_cfg, rng.raw());
    freeze(backbone);
    PeftState peft = init_peft(peft_cfg, backbone_cfg, rng.raw());
    // zero-initialized up-projections would zero out half the gradients
    for (Tensor t : peft.parameters()) {
        for (double& v : t.mutable_data()) {
            v = rng.uniform(-0.5, 0.5);
        }
    }
    HeadState head = init_head(head_cfg, rng.raw());
    PeftState* peft_ptr = peft_cfg.kind == PeftKind::none ? nullptr : &peft;

    const int64_t t_frames = 5;
    const Tensor frames_a =
        Tensor::uniform({t_frames, backbone_cfg.frontend_in}, rng, -1.0, 1.0);
    const Tensor frames_b =
        Tensor::uniform({t_frames + 2, backbone_cfg.frontend_in}, rng, -1.0, 1.0);
    const std::vector<int64_t> labels = {rng.uniform_int(head_cfg.n_classes),
                                         rng.uniform_int(head_cfg.n_classes)};

    auto loss_value = [&]() {
        std::vector<Tensor> rows;
        rows.push_back(head_forward(backbone_forward(backbone, frames_a, peft_ptr), head));
        rows.push_back(head_forward(backbone_forward(backbone, frames_b, peft_ptr), head));
        return cross_entropy(stack_rows(rows), labels);
    };

    std::vector<Tensor> params = trainable_parameters(peft_ptr, head);
    for (Tensor& p : params) {
        p.zero_grad();
    }
    {
        Tape tape;
        tape.backward(loss_value());
    }

    auto probe = [&](Tensor& p, int64_t j, double h) {
        auto data = p.mutable_data();
        const double saved = data[static_cast<size_t>(j)];
        data[static_cast<size_t>(j)] = saved + h;
        const double plus = loss_value().item();
        data[static_cast<size_t>(j)] = saved - h;
        const double minus = loss_value().item();
        data[static_cast<size_t>(j)] = saved;
        const double fd = (plus - minus) / (2.0 * h);
        const double ad = p.grad()[static_cast<size_t>(j)];
        return std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-6});
    };

    double max_rel = 0.0;
    for (Tensor& p : params) {
        const int64_t n = p.size();
        const int64_t probes = std::min<int64_t>(directions_per_tensor, n);
        for (int64_t d = 0; d < probes; ++d) {
            const int64_t j = rng.uniform_int(n);
            double rel = probe(p, j, step);
            // a step that straddles a relu kink inflates the difference
            // quotient; shrinking it isolates genuine gradient errors
            for (double h = step / 10.0; rel >= 1e-4 && h >= step / 100.0; h /= 10.0) {
                rel = std::min(rel, probe(p, j, h));
            }
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

GradCheckReport gradcheck_suite(uint64_t seed, int64_t directions_per_tensor, double step) {
    BackboneConfig backbone_cfg; // 2-layer toy geometry
    HeadConfig head_cfg;
    head_cfg.n_layers_in = backbone_cfg.n_layers;
    head_cfg.hidden_in = backbone_cfg.hidden;
    head_cfg.conv_dim = 16;
    head_cfg.n_classes = 4;

    GradCheckReport report;
    for (PeftKind kind : {PeftKind::none, PeftKind::adapter, PeftKind::parallel_adapter,
                          PeftKind::prompt, PeftKind::lora}) {
        PeftConfig peft_cfg;
        peft_cfg.kind = kind;
        peft_cfg.bottleneck = 8;
        peft_cfg.prompt_len = 3;
        peft_cfg.rank = 4;
        const double err = gradcheck_model(backbone_cfg, head_cfg, peft_cfg, seed,
                                           directions_per_tensor, step);
        report.per_kind.emplace_back(peft_kind_name(kind), err);
        report.max_rel_err = std::max(report.max_rel_err, err);
        report.n_coords += directions_per_tensor;
    }
    return report;
}

} // namespace peftser
