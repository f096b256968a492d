#include <benchmark/benchmark.h>

#include "peftser/backbone.hpp"
#include "peftser/head.hpp"
#include "peftser/ops.hpp"
#include "peftser/trainer.hpp"

namespace {

using namespace peftser;

void MatmulForward(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(7);
    Tensor a = Tensor::uniform({n, n}, rng, -1.0, 1.0);
    Tensor b = Tensor::uniform({n, n}, rng, -1.0, 1.0);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetComplexityN(n);
}
BENCHMARK(MatmulForward)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BackboneForwardToy(benchmark::State& state) {
    BackboneConfig cfg;
    Backbone backbone = build_backbone(cfg, 1);
    freeze(backbone);
    Rng rng(2);
    Tensor frames = Tensor::uniform({40, cfg.frontend_in}, rng, -1.0, 1.0);
    for (auto _ : state) {
        auto hiddens = backbone_forward(backbone, frames);
        benchmark::DoNotOptimize(hiddens.back().data().data());
    }
}
BENCHMARK(BackboneForwardToy);

void ForwardBackwardStep(benchmark::State& state) {
    BackboneConfig cfg;
    Backbone backbone = build_backbone(cfg, 1);
    freeze(backbone);
    PeftConfig peft_cfg;
    peft_cfg.kind = PeftKind::lora;
    peft_cfg.rank = 8;
    PeftState peft = init_peft(peft_cfg, cfg, 2);
    HeadConfig head_cfg{cfg.n_layers, cfg.hidden, 64, 4};
    HeadState head = init_head(head_cfg, 3);
    Rng rng(4);
    Tensor frames = Tensor::uniform({40, cfg.frontend_in}, rng, -1.0, 1.0);
    for (auto _ : state) {
        Tape tape;
        Tensor logits = head_forward(backbone_forward(backbone, frames, &peft), head);
        Tensor loss = cross_entropy(reshape(logits, {1, 4}), {1});
        tape.backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(ForwardBackwardStep);

void PeftLoraHook(benchmark::State& state) {
    BackboneConfig cfg;
    Rng rng(5);
    PeftConfig peft_cfg;
    peft_cfg.kind = PeftKind::lora;
    PeftState peft = init_peft(peft_cfg, cfg, 6);
    Tensor h = Tensor::uniform({40, cfg.hidden}, rng, -1.0, 1.0);
    Tensor w1 = Tensor::uniform({cfg.hidden, cfg.ffn_dim}, rng, -0.2, 0.2);
    Tensor b1 = Tensor::uniform({cfg.ffn_dim}, rng, -0.2, 0.2);
    for (auto _ : state) {
        Tensor out = apply_lora_forward(h, w1, b1, peft.layers[0]);
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(PeftLoraHook);

} // namespace

BENCHMARK_MAIN();
