// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and enforces its own runtime
// budget where one is fixed.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <vector>

#include "peftser/checkpoint.hpp"
#include "peftser/cli.hpp"
#include "peftser/gradcheck.hpp"
#include "peftser/ops.hpp"
#include "peftser/trainer.hpp"

using namespace peftser;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double round_millions(int64_t count) {
    return std::round(static_cast<double>(count) / 1e6 * 100.0) / 100.0;
}

bool logits_bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(),
                       a.data().size() * sizeof(double)) == 0;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("peftser_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// 1. parameter table reproduction
// ---------------------------------------------------------------------------
Outcome criterion_table() {
    const auto started = std::chrono::steady_clock::now();
    struct Expected {
        const char* architecture;
        int64_t downstream, adapter, prompt, lora;
        double downstream_m, adapter_m, prompt_m, lora_m;
    };
    const std::vector<Expected> expected = {
        {"Whisper Tiny", 296968, 395264, 7680, 61440, 0.30, 0.40, 0.01, 0.06},
        {"Whisper Base", 329738, 790272, 15360, 122880, 0.33, 0.79, 0.02, 0.12},
        {"Whisper Small", 395280, 2370048, 46080, 368640, 0.40, 2.37, 0.05, 0.37},
        {"W2V 2.0 Base", 395280, 2370048, 46080, 368640, 0.40, 2.37, 0.05, 0.37},
        {"WavLM Base+", 395280, 2370048, 46080, 368640, 0.40, 2.37, 0.05, 0.37},
    };
    const auto rows = cli::count_params_table();
    if (rows.size() != expected.size()) {
        return {false, "table has " + std::to_string(rows.size()) + " rows"};
    }
    int matched = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const auto& e = expected[i];
        const bool ints = r.downstream == e.downstream && r.adapter == e.adapter &&
                          r.prompt == e.prompt && r.lora == e.lora;
        const bool rounded = round_millions(r.downstream) == e.downstream_m &&
                             round_millions(r.adapter) == e.adapter_m &&
                             round_millions(r.prompt) == e.prompt_m &&
                             round_millions(r.lora) == e.lora_m;
        if (r.architecture != e.architecture || !ints || !rounded) {
            return {false, "row " + std::string(e.architecture) + " mismatches"};
        }
        matched += 4;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (secs >= 1.0) {
        return {false, "took " + std::to_string(secs) + "s, budget is 1s"};
    }
    return {true, std::to_string(matched) + "/20 cells match to 2-decimal M rounding"};
}

// ---------------------------------------------------------------------------
// 2. gradient correctness
// ---------------------------------------------------------------------------
Outcome criterion_gradients() {
    const auto started = std::chrono::steady_clock::now();
    const GradCheckReport report = gradcheck_suite(7, 20, 1e-4);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    char err[32];
    std::snprintf(err, sizeof(err), "%.2e", report.max_rel_err);
    if (secs >= 60.0) {
        return {false, "took " + std::to_string(secs) + "s, budget is 60s"};
    }
    if (!(report.max_rel_err < 1e-4)) {
        return {false, std::string("max relative error ") + err};
    }
    return {true, std::string("max relative error ") + err + " over every mechanism"};
}

// ---------------------------------------------------------------------------
// 3. lora merge equivalence after training
// ---------------------------------------------------------------------------
Outcome criterion_merge() {
    const fs::path dir = scratch_dir("merge");
    SynthConfig synth;
    synth.n_per_class = 25;
    synth.n_speakers = 5;
    synth.seed = 0;
    const auto entries = synth_corpus(synth, dir);

    const BackboneConfig backbone_cfg;
    Backbone backbone = build_backbone(backbone_cfg, 1);
    freeze(backbone);
    PeftConfig peft_cfg;
    peft_cfg.kind = PeftKind::lora;
    peft_cfg.rank = 8;
    PeftState peft = init_peft(peft_cfg, backbone_cfg, 2);
    HeadConfig head_cfg{backbone_cfg.n_layers, backbone_cfg.hidden, 32, 4};
    HeadState head = init_head(head_cfg, 3);

    std::vector<Tensor> frames;
    std::vector<int64_t> labels;
    for (const ManifestEntry& e : entries) {
        frames.push_back(load_entry_features(e, dir).frames);
        labels.push_back(e.label);
    }

    Adam optimizer(trainable_parameters(&peft, head), 5e-4);
    Rng rng(4);
    const int64_t n = static_cast<int64_t>(frames.size());
    for (int step = 0; step < 200; ++step) {
        std::vector<Tensor> rows;
        std::vector<int64_t> batch_labels;
        Tape tape;
        for (int b = 0; b < 32; ++b) {
            const int64_t ix = rng.uniform_int(n);
            rows.push_back(head_forward(
                backbone_forward(backbone, frames[static_cast<size_t>(ix)], &peft), head));
            batch_labels.push_back(labels[static_cast<size_t>(ix)]);
        }
        const Tensor loss = cross_entropy(stack_rows(rows), batch_labels);
        optimizer.zero_grad();
        tape.backward(loss);
        optimizer.step();
    }

    const Backbone merged = merge_lora(backbone, peft);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor input = Tensor::uniform({12, backbone_cfg.frontend_in}, rng, -1.0, 1.0);
        const auto hooked = backbone_forward(backbone, input, &peft);
        const auto plain = backbone_forward(merged, input);
        for (size_t i = 0; i < hooked.size(); ++i) {
            for (int64_t j = 0; j < hooked[i].size(); ++j) {
                worst = std::max(worst, std::abs(hooked[i].data()[static_cast<size_t>(j)] -
                                                 plain[i].data()[static_cast<size_t>(j)]));
            }
        }
    }
    fs::remove_all(dir);
    char delta[32];
    std::snprintf(delta, sizeof(delta), "%.2e", worst);
    if (!(worst < 1e-9)) {
        return {false, std::string("max |delta| ") + delta + " after 200 steps"};
    }
    return {true, std::string("max |delta| ") + delta +
                      " between merged and hooked forward after 200 steps"};
}

// ---------------------------------------------------------------------------
// 4. identity at initialization
// ---------------------------------------------------------------------------
Outcome criterion_identity() {
    const BackboneConfig backbone_cfg;
    Backbone backbone = build_backbone(backbone_cfg, 11);
    freeze(backbone);
    const HeadConfig head_cfg{backbone_cfg.n_layers, backbone_cfg.hidden, 32, 4};
    const HeadState head = init_head(head_cfg, 12);
    Rng rng(13);

    for (int trial = 0; trial < 5; ++trial) {
        const Tensor frames =
            Tensor::uniform({5 + 3 * trial, backbone_cfg.frontend_in}, rng, -1.0, 1.0);
        const Tensor baseline = head_forward(backbone_forward(backbone, frames), head);
        for (PeftKind kind :
             {PeftKind::adapter, PeftKind::parallel_adapter, PeftKind::lora}) {
            PeftConfig cfg;
            cfg.kind = kind;
            cfg.bottleneck = 128;
            cfg.rank = 8;
            const PeftState state = init_peft(cfg, backbone_cfg, 14);
            const Tensor logits =
                head_forward(backbone_forward(backbone, frames, &state), head);
            if (!logits_bit_equal(logits, baseline)) {
                return {false, std::string(peft_kind_name(kind)) +
                                   " logits differ from the hook-free model at init"};
            }
        }
    }
    return {true, "adapter, parallel adapter, and lora logits are bit-identical at init"};
}

// ---------------------------------------------------------------------------
// 5. frozen-backbone immutability
// ---------------------------------------------------------------------------
Outcome criterion_frozen() {
    const fs::path dir = scratch_dir("frozen");
    SynthConfig synth;
    synth.n_per_class = 8;
    synth.n_speakers = 4;
    synth.seed = 1;
    const auto entries = synth_corpus(synth, dir);
    const Fold fold = split_folds(entries, SplitScheme::k_fold_speaker_independent, 4)[0];

    const BackboneConfig backbone_cfg;
    for (PeftKind kind : {PeftKind::none, PeftKind::adapter, PeftKind::parallel_adapter,
                          PeftKind::prompt, PeftKind::lora}) {
        Backbone backbone = build_backbone(backbone_cfg, 21);
        freeze(backbone);
        const uint64_t before = parameter_checksum(backbone);
        TrainConfig cfg;
        cfg.max_epochs = 2;
        cfg.peft.kind = kind;
        cfg.peft.bottleneck = 8;
        cfg.peft.prompt_len = 3;
        cfg.peft.rank = 4;
        PeftState peft = init_peft(cfg.peft, backbone_cfg, 22);
        HeadState head = init_head({backbone_cfg.n_layers, backbone_cfg.hidden, 16, 4}, 23);
        PeftState* peft_ptr = kind == PeftKind::none ? nullptr : &peft;
        train(backbone, peft_ptr, head, fold, cfg, dir);
        if (parameter_checksum(backbone) != before) {
            fs::remove_all(dir);
            return {false, std::string(peft_kind_name(kind)) + " run mutated the backbone"};
        }
    }
    fs::remove_all(dir);
    return {true, "checksums equal before and after training for none + 4 mechanisms"};
}

// ---------------------------------------------------------------------------
// 6. end-to-end learnability
// ---------------------------------------------------------------------------
Outcome criterion_learnability() {
    const auto started = std::chrono::steady_clock::now();
    const fs::path dir = scratch_dir("learn");
    SynthConfig synth;
    synth.n_per_class = 50;
    synth.n_speakers = 10;
    synth.seed = 0;
    const auto entries = synth_corpus(synth, dir);
    const Fold fold = split_folds(entries, SplitScheme::k_fold_speaker_independent, 5)[0];

    const BackboneConfig backbone_cfg;
    std::string detail;
    for (PeftKind kind :
         {PeftKind::none, PeftKind::adapter, PeftKind::prompt, PeftKind::lora}) {
        Backbone backbone = build_backbone(backbone_cfg, 0);
        freeze(backbone);
        TrainConfig cfg;
        cfg.max_epochs = 30;
        cfg.seed = 0;
        cfg.peft.kind = kind; // paper-default sizings: e=128, l=5, r=8
        PeftState peft = init_peft(cfg.peft, backbone_cfg, 1);
        HeadState head = init_head({backbone_cfg.n_layers, backbone_cfg.hidden, 64, 4}, 2);
        PeftState* peft_ptr = kind == PeftKind::none ? nullptr : &peft;
        const TrainReport report = train(backbone, peft_ptr, head, fold, cfg, dir);
        detail += std::string(peft_kind_name(kind)) + "=" +
                  std::to_string(report.best_val_uar).substr(0, 5) + "% ";
        if (report.best_val_uar < 80.0) {
            fs::remove_all(dir);
            return {false, std::string(peft_kind_name(kind)) + " best validation UAR " +
                               std::to_string(report.best_val_uar) + "% < 80%"};
        }
    }
    fs::remove_all(dir);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (secs >= 300.0) {
        return {false, "took " + std::to_string(secs) + "s, budget is 300s"};
    }
    return {true, "best validation UAR " + detail + "(chance 25%)"};
}

// ---------------------------------------------------------------------------
// 7. fairness-metric oracle equivalence
// ---------------------------------------------------------------------------
double oracle_dem_parity(const std::vector<int64_t>& preds,
                         const std::vector<Gender>& genders, int64_t n_classes) {
    std::map<int64_t, double> f, m;
    double nf = 0, nm = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (genders[i] == Gender::female) {
            f[preds[i]] += 1;
            nf += 1;
        } else if (genders[i] == Gender::male) {
            m[preds[i]] += 1;
            nm += 1;
        }
    }
    double total = 0;
    for (int64_t c = 0; c < n_classes; ++c) {
        total += std::abs(f[c] / nf - m[c] / nm);
    }
    return 100.0 * total / static_cast<double>(n_classes);
}

double oracle_eq_odds(const std::vector<int64_t>& preds, const std::vector<int64_t>& labels,
                      const std::vector<Gender>& genders, int64_t n_classes) {
    double total = 0;
    int64_t strata = 0;
    for (int64_t y = 0; y < n_classes; ++y) {
        std::map<int64_t, double> f, m;
        double nf = 0, nm = 0;
        for (size_t i = 0; i < preds.size(); ++i) {
            if (labels[i] != y) {
                continue;
            }
            if (genders[i] == Gender::female) {
                f[preds[i]] += 1;
                nf += 1;
            } else if (genders[i] == Gender::male) {
                m[preds[i]] += 1;
                nm += 1;
            }
        }
        if (nf == 0 || nm == 0) {
            continue;
        }
        double gap = 0;
        for (int64_t c = 0; c < n_classes; ++c) {
            gap += std::abs(f[c] / nf - m[c] / nm);
        }
        total += 100.0 * gap / static_cast<double>(n_classes);
        ++strata;
    }
    return total / static_cast<double>(strata);
}

Outcome criterion_fairness() {
    Rng rng(31);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t n = rng.uniform_int(40, 240);
        std::vector<int64_t> preds, labels;
        std::vector<Gender> genders;
        for (int64_t i = 0; i < n; ++i) {
            preds.push_back(rng.uniform_int(4));
            labels.push_back(rng.uniform_int(4));
            genders.push_back(rng.uniform_int(2) == 0 ? Gender::female : Gender::male);
        }
        labels[0] = labels[1] = 0;
        genders[0] = Gender::female;
        genders[1] = Gender::male;

        const double dp = demographic_parity(preds, genders, 4);
        const double eo = equality_of_odds(preds, labels, genders, 4);
        worst = std::max(worst, std::abs(dp - oracle_dem_parity(preds, genders, 4)));
        worst = std::max(worst, std::abs(eo - oracle_eq_odds(preds, labels, genders, 4)));

        // symmetry under group swap
        std::vector<Gender> flipped;
        for (Gender g : genders) {
            flipped.push_back(g == Gender::female ? Gender::male : Gender::female);
        }
        worst = std::max(worst, std::abs(demographic_parity(preds, flipped, 4) - dp));
        worst = std::max(worst, std::abs(equality_of_odds(preds, labels, flipped, 4) - eo));
    }
    if (!(worst < 1e-9)) {
        return {false, "max |delta| vs brute force " + std::to_string(worst)};
    }

    // group-identical predictions score exactly zero on both metrics
    std::vector<int64_t> preds, labels;
    std::vector<Gender> genders;
    for (int64_t i = 0; i < 40; ++i) {
        const int64_t p = i % 4, y = (i / 4) % 4;
        for (Gender g : {Gender::female, Gender::male}) {
            preds.push_back(p);
            labels.push_back(y);
            genders.push_back(g);
        }
    }
    if (demographic_parity(preds, genders, 4) != 0.0 ||
        equality_of_odds(preds, labels, genders, 4) != 0.0) {
        return {false, "group-identical predictions do not score zero"};
    }
    return {true, "100 random sets match the brute-force recount within 1e-9; zero on "
                  "group-identical; swap-symmetric"};
}

// ---------------------------------------------------------------------------
// 8. sweep accounting
// ---------------------------------------------------------------------------
Outcome criterion_sweep_accounting() {
    int64_t points = 0;
    for (const std::string& name : preset_names()) {
        const BackboneConfig backbone = preset_config(name);
        struct Grid {
            PeftKind kind;
            std::vector<int64_t> values;
        };
        const std::vector<Grid> grids = {
            {PeftKind::adapter, {32, 64, 128}},
            {PeftKind::parallel_adapter, {32, 64, 128}},
            {PeftKind::prompt, {1, 3, 5}},
            {PeftKind::lora, {8, 16, 32}},
        };
        for (const Grid& grid : grids) {
            for (int64_t v : grid.values) {
                PeftConfig cfg;
                cfg.kind = grid.kind;
                cfg.bottleneck = v;
                cfg.prompt_len = v;
                cfg.rank = v;
                const PeftState state = init_peft(cfg, backbone, 1);
                if (state.trainable_count() != peft_param_count(backbone, cfg)) {
                    return {false, name + " " + peft_kind_name(grid.kind) + " value " +
                                       std::to_string(v) + " count mismatch"};
                }
                ++points;
            }
        }
    }

    // prompt-model frame outputs keep their shape for every prompt size
    const BackboneConfig toy;
    Backbone backbone = build_backbone(toy, 41);
    freeze(backbone);
    Rng rng(42);
    const Tensor frames = Tensor::uniform({11, toy.frontend_in}, rng, -1.0, 1.0);
    for (int64_t l : {1, 3, 5}) {
        PeftConfig cfg;
        cfg.kind = PeftKind::prompt;
        cfg.prompt_len = l;
        PeftState state = init_peft(cfg, toy, 43);
        const auto hiddens = backbone_forward(backbone, frames, &state);
        for (const Tensor& h : hiddens) {
            if (h.shape() != Shape{11, toy.hidden}) {
                return {false, "prompt size " + std::to_string(l) + " changed output shape"};
            }
        }
    }
    return {true, std::to_string(points) +
                      " grid points match closed forms; prompt output shape is l-invariant"};
}

// ---------------------------------------------------------------------------
// 9. fold hygiene
// ---------------------------------------------------------------------------
Outcome criterion_folds() {
    Rng rng(51);
    for (int trial = 0; trial < 1000; ++trial) {
        const int64_t n_speakers = rng.uniform_int(3, 25);
        const int64_t k = rng.uniform_int(3, std::min<int64_t>(6, n_speakers));
        std::vector<ManifestEntry> entries;
        for (int64_t s = 0; s < n_speakers; ++s) {
            const int64_t utterances = rng.uniform_int(1, 4);
            for (int64_t i = 0; i < utterances; ++i) {
                ManifestEntry e;
                e.id = "t" + std::to_string(trial) + "_s" + std::to_string(s) + "_" +
                       std::to_string(i);
                e.speaker = "spk" + std::to_string(s);
                e.label = rng.uniform_int(4);
                entries.push_back(e);
            }
        }
        const auto folds = split_folds(entries, SplitScheme::k_fold_speaker_independent, k);
        std::multiset<std::string> tested;
        for (const Fold& fold : folds) {
            std::set<std::string> train, val, test;
            for (const auto& e : fold.train) {
                train.insert(e.speaker);
            }
            for (const auto& e : fold.val) {
                val.insert(e.speaker);
            }
            for (const auto& e : fold.test) {
                test.insert(e.speaker);
                tested.insert(e.id);
            }
            for (const auto& s : train) {
                if (val.count(s) || test.count(s)) {
                    return {false, "speaker leakage in trial " + std::to_string(trial)};
                }
            }
            for (const auto& s : val) {
                if (test.count(s)) {
                    return {false, "val/test leakage in trial " + std::to_string(trial)};
                }
            }
        }
        if (tested.size() != entries.size()) {
            return {false, "test folds do not partition trial " + std::to_string(trial)};
        }
        for (const auto& e : entries) {
            if (tested.count(e.id) != 1) {
                return {false, "entry " + e.id + " tested " +
                                   std::to_string(tested.count(e.id)) + " times"};
            }
        }
    }
    return {true, "1000 randomized splits show zero leakage and exact test partitions"};
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"parameter-table-reproduction", criterion_table},
        {"gradient-correctness", criterion_gradients},
        {"lora-merge-equivalence", criterion_merge},
        {"identity-at-initialization", criterion_identity},
        {"frozen-backbone-immutability", criterion_frozen},
        {"end-to-end-learnability", criterion_learnability},
        {"fairness-oracle-equivalence", criterion_fairness},
        {"sweep-accounting", criterion_sweep_accounting},
        {"fold-hygiene", criterion_folds},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto started = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criteria[i].run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                .count();
        char line[512];
        std::snprintf(line, sizeof(line), "[%s] %zu. %s: %s (%.2fs)",
                      outcome.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                      outcome.detail.c_str(), secs);
        std::cout << line << std::endl;
        failures += !outcome.pass;
    }
    if (failures) {
        std::cout << failures << " criterion(s) failed" << std::endl;
        return 1;
    }
    std::cout << "all " << criteria.size() << " criteria passed" << std::endl;
    return 0;
}
