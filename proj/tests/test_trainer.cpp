#include <filesystem>

#include "doctest.h"
#include "peftser/checkpoint.hpp"
#include "peftser/ops.hpp"
#include "peftser/trainer.hpp"
#include "testutil.hpp"

using namespace peftser;
using testutil::bit_equal;

namespace {

struct TinyCorpus {
    std::filesystem::path dir;
    std::vector<ManifestEntry> entries;
    Fold fold;

    ~TinyCorpus() { std::filesystem::remove_all(dir); }
};

TinyCorpus make_corpus(const std::string& name, int64_t n_per_class = 8,
                       int64_t n_speakers = 4) {
    TinyCorpus corpus;
    corpus.dir = std::filesystem::temp_directory_path() / ("peftser_train_" + name);
    std::filesystem::remove_all(corpus.dir);
    SynthConfig cfg;
    cfg.n_per_class = n_per_class;
    cfg.n_speakers = n_speakers;
    cfg.seed = 0;
    corpus.entries = synth_corpus(cfg, corpus.dir);
    corpus.fold = split_folds(corpus.entries, SplitScheme::k_fold_speaker_independent,
                              std::min<int64_t>(4, n_speakers))[0];
    return corpus;
}

HeadConfig toy_head(const BackboneConfig& backbone, int64_t conv_dim = 16) {
    return HeadConfig{backbone.n_layers, backbone.hidden, conv_dim, 4};
}

TrainConfig quick_config(PeftKind kind, int64_t epochs = 2) {
    TrainConfig cfg;
    cfg.max_epochs = epochs;
    cfg.peft.kind = kind;
    cfg.peft.bottleneck = 8;
    cfg.peft.prompt_len = 3;
    cfg.peft.rank = 4;
    return cfg;
}

} // namespace

TEST_CASE("downstream-only training updates exactly the head parameters") {
    const BackboneConfig backbone_cfg;
    const HeadConfig head_cfg = toy_head(backbone_cfg);
    HeadState head = init_head(head_cfg, 1);
    const auto params = trainable_parameters(nullptr, head);
    Adam optimizer(params, 1e-3);
    CHECK(optimizer.param_count() == head_param_count(head_cfg));
}

TEST_CASE("training is deterministic per seed") {
    const TinyCorpus corpus = make_corpus("determinism");
    const BackboneConfig backbone_cfg;
    auto run = [&]() {
        Backbone backbone = build_backbone(backbone_cfg, 1);
        freeze(backbone);
        TrainConfig cfg = quick_config(PeftKind::lora, 3);
        PeftState peft = init_peft(cfg.peft, backbone_cfg, 2);
        HeadState head = init_head(toy_head(backbone_cfg), 3);
        return train(backbone, &peft, head, corpus.fold, cfg, corpus.dir);
    };
    const TrainReport a = run();
    const TrainReport b = run();
    CHECK(a.train_loss == b.train_loss);
    CHECK(a.val_uar == b.val_uar);
    CHECK(a.best_epoch == b.best_epoch);
}

TEST_CASE("the frozen backbone is byte-identical after every mechanism") {
    const TinyCorpus corpus = make_corpus("frozen");
    const BackboneConfig backbone_cfg;
    for (PeftKind kind : {PeftKind::none, PeftKind::adapter, PeftKind::parallel_adapter,
                          PeftKind::prompt, PeftKind::lora}) {
        CAPTURE(peft_kind_name(kind));
        Backbone backbone = build_backbone(backbone_cfg, 7);
        freeze(backbone);
        const uint64_t before = parameter_checksum(backbone);
        TrainConfig cfg = quick_config(kind);
        PeftState peft = init_peft(cfg.peft, backbone_cfg, 8);
        HeadState head = init_head(toy_head(backbone_cfg), 9);
        PeftState* peft_ptr = kind == PeftKind::none ? nullptr : &peft;
        train(backbone, peft_ptr, head, corpus.fold, cfg, corpus.dir);
        CHECK(parameter_checksum(backbone) == before);
    }
}

TEST_CASE("loss decreases over training for every mechanism") {
    const TinyCorpus corpus = make_corpus("learns", 10, 4);
    const BackboneConfig backbone_cfg;
    for (PeftKind kind : {PeftKind::none, PeftKind::adapter, PeftKind::parallel_adapter,
                          PeftKind::prompt, PeftKind::lora}) {
        CAPTURE(peft_kind_name(kind));
        Backbone backbone = build_backbone(backbone_cfg, 11);
        freeze(backbone);
        TrainConfig cfg = quick_config(kind, 10);
        PeftState peft = init_peft(cfg.peft, backbone_cfg, 12);
        HeadState head = init_head(toy_head(backbone_cfg), 13);
        PeftState* peft_ptr = kind == PeftKind::none ? nullptr : &peft;
        const TrainReport report =
            train(backbone, peft_ptr, head, corpus.fold, cfg, corpus.dir);
        CHECK(report.train_loss[9] < report.train_loss[0]);
        CHECK(report.best_val_uar ==
              *std::max_element(report.val_uar.begin(), report.val_uar.end()));
    }
}

TEST_CASE("training preconditions") {
    const TinyCorpus corpus = make_corpus("preconditions");
    const BackboneConfig backbone_cfg;
    TrainConfig cfg = quick_config(PeftKind::none);
    HeadState head = init_head(toy_head(backbone_cfg), 2);

    SUBCASE("unfrozen backbone is rejected") {
        Backbone open = build_backbone(backbone_cfg, 1);
        CHECK_THROWS_AS(train(open, nullptr, head, corpus.fold, cfg, corpus.dir), UsageError);
    }
    SUBCASE("empty train split is rejected") {
        Backbone backbone = build_backbone(backbone_cfg, 1);
        freeze(backbone);
        Fold empty = corpus.fold;
        empty.train.clear();
        CHECK_THROWS_AS(train(backbone, nullptr, head, empty, cfg, corpus.dir), UsageError);
    }
    SUBCASE("invalid hyperparameters are rejected") {
        TrainConfig bad = cfg;
        bad.lr = 0.0;
        CHECK_THROWS_AS(bad.validate(), UsageError);
        bad = cfg;
        bad.batch_size = 0;
        CHECK_THROWS_AS(bad.validate(), UsageError);
    }
}

TEST_CASE("diverged training reports the failing step") {
    const TinyCorpus corpus = make_corpus("nan");
    const BackboneConfig backbone_cfg;
    Backbone backbone = build_backbone(backbone_cfg, 1);
    freeze(backbone);
    TrainConfig cfg = quick_config(PeftKind::none, 4);
    cfg.lr = 1e160; // one step overflows the head activations to inf
    HeadState head = init_head(toy_head(backbone_cfg), 2);
    try {
        train(backbone, nullptr, head, corpus.fold, cfg, corpus.dir);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch") != std::string::npos);
        CHECK(msg.find("batch") != std::string::npos);
    }
}

TEST_CASE("identity at init gives the mechanisms equal starting predictions") {
    const TinyCorpus corpus = make_corpus("init");
    const BackboneConfig backbone_cfg;
    Backbone backbone = build_backbone(backbone_cfg, 21);
    freeze(backbone);
    const HeadState head = init_head(toy_head(backbone_cfg), 22);

    std::vector<int64_t> baseline;
    for (const ManifestEntry& e : corpus.fold.val) {
        const FeatureSequence seq = load_entry_features(e, corpus.dir);
        baseline.push_back(predict(backbone, nullptr, head, seq.frames));
    }
    for (PeftKind kind : {PeftKind::adapter, PeftKind::parallel_adapter, PeftKind::lora}) {
        CAPTURE(peft_kind_name(kind));
        TrainConfig cfg = quick_config(kind);
        PeftState peft = init_peft(cfg.peft, backbone_cfg, 23);
        std::vector<int64_t> preds;
        for (const ManifestEntry& e : corpus.fold.val) {
            const FeatureSequence seq = load_entry_features(e, corpus.dir);
            preds.push_back(predict(backbone, &peft, head, seq.frames));
        }
        CHECK(preds == baseline);
    }
}

TEST_CASE("trained checkpoints round-trip through the on-disk format") {
    const TinyCorpus corpus = make_corpus("roundtrip");
    const BackboneConfig backbone_cfg;
    Backbone backbone = build_backbone(backbone_cfg, 31);
    freeze(backbone);
    TrainConfig cfg = quick_config(PeftKind::adapter, 2);
    PeftState peft = init_peft(cfg.peft, backbone_cfg, 32);
    HeadState head = init_head(toy_head(backbone_cfg), 33);
    train(backbone, &peft, head, corpus.fold, cfg, corpus.dir);

    const auto ckpt_dir = corpus.dir / "ckpt";
    save_checkpoint(ckpt_dir, backbone, &peft, head);
    const Checkpoint loaded = load_checkpoint(ckpt_dir);
    REQUIRE(loaded.peft.has_value());
    CHECK(loaded.peft->config.kind == PeftKind::adapter);
    CHECK(parameter_checksum(loaded.backbone) == parameter_checksum(backbone));

    for (const ManifestEntry& e : corpus.fold.test) {
        const FeatureSequence seq = load_entry_features(e, corpus.dir);
        CHECK(predict(loaded.backbone, &*loaded.peft, loaded.head, seq.frames) ==
              predict(backbone, &peft, head, seq.frames));
    }
}

TEST_CASE("sweep") {
    const TinyCorpus corpus = make_corpus("sweep", 6, 4);
    const BackboneConfig backbone_cfg;
    const HeadConfig head_cfg = toy_head(backbone_cfg);
    TrainConfig base = quick_config(PeftKind::lora, 1);

    SUBCASE("lora grid counts scale linearly in the rank") {
        std::vector<PeftConfig> grid;
        for (int64_t r : {8, 16, 32}) {
            PeftConfig p;
            p.kind = PeftKind::lora;
            p.rank = r;
            grid.push_back(p);
        }
        const auto points =
            sweep(backbone_cfg, head_cfg, grid, {corpus.fold}, base, corpus.dir);
        REQUIRE(points.size() == 3);
        for (const auto& point : points) {
            CHECK(!point.failed);
        }
        CHECK(points[1].peft_trainable == 2 * points[0].peft_trainable);
        CHECK(points[2].peft_trainable == 4 * points[0].peft_trainable);
    }
    SUBCASE("adapter grid counts match the closed form") {
        std::vector<PeftConfig> grid;
        for (int64_t e : {32, 64, 128}) {
            PeftConfig p;
            p.kind = PeftKind::adapter;
            p.bottleneck = e;
            grid.push_back(p);
        }
        const auto points =
            sweep(backbone_cfg, head_cfg, grid, {corpus.fold}, base, corpus.dir);
        for (size_t i = 0; i < grid.size(); ++i) {
            CHECK(!points[i].failed);
            CHECK(points[i].peft_trainable == peft_param_count(backbone_cfg, grid[i]));
        }
    }
    SUBCASE("empty grid is a usage error") {
        CHECK_THROWS_AS(sweep(backbone_cfg, head_cfg, {}, {corpus.fold}, base, corpus.dir),
                        UsageError);
    }
    SUBCASE("per-point failures do not abort the rest") {
        PeftConfig good;
        good.kind = PeftKind::prompt;
        good.prompt_len = 2;
        PeftConfig bad = good;
        bad.prompt_len = backbone_cfg.max_positions; // overflows every sequence
        const auto points =
            sweep(backbone_cfg, head_cfg, {bad, good}, {corpus.fold}, base, corpus.dir);
        REQUIRE(points.size() == 2);
        CHECK(points[0].failed);
        CHECK(!points[0].error.empty());
        CHECK(!points[1].failed);
    }
    SUBCASE("parallel execution matches the grid order") {
        std::vector<PeftConfig> grid;
        for (int64_t r : {4, 8}) {
            PeftConfig p;
            p.kind = PeftKind::lora;
            p.rank = r;
            grid.push_back(p);
        }
        const auto serial =
            sweep(backbone_cfg, head_cfg, grid, {corpus.fold}, base, corpus.dir, 1);
        const auto parallel =
            sweep(backbone_cfg, head_cfg, grid, {corpus.fold}, base, corpus.dir, 2);
        REQUIRE(serial.size() == parallel.size());
        for (size_t i = 0; i < serial.size(); ++i) {
            CHECK(serial[i].peft_trainable == parallel[i].peft_trainable);
            CHECK(serial[i].eval.uar_mean == doctest::Approx(parallel[i].eval.uar_mean));
        }
    }
}
