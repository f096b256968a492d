#include "peftser/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "peftser/checkpoint.hpp"
#include "peftser/data.hpp"
#include "peftser/eval.hpp"
#include "peftser/gradcheck.hpp"
#include "peftser/trainer.hpp"

namespace peftser::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) {
            throw UsageError("config: unknown key '" + key + "' in " + where);
        }
    }
}

json parse_override_value(const std::string& text) {
    if (text == "true") {
        return true;
    }
    if (text == "false") {
        return false;
    }
    try {
        size_t used = 0;
        if (text.find_first_of(".eE") != std::string::npos) {
            const double v = std::stod(text, &used);
            if (used == text.size()) {
                return v;
            }
        } else {
            const long long v = std::stoll(text, &used);
            if (used == text.size()) {
                return v;
            }
        }
    } catch (const std::exception&) {
    }
    return text;
}

// dotted-key=value overrides, applied on top of the merged config
void apply_overrides(json& config, const std::vector<std::string>& overrides) {
    for (const std::string& item : overrides) {
        const size_t eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw UsageError("--set expects dotted.key=value, got '" + item + "'");
        }
        const std::string path = item.substr(0, eq);
        const json value = parse_override_value(item.substr(eq + 1));
        json* node = &config;
        size_t begin = 0;
        while (true) {
            const size_t dot = path.find('.', begin);
            const std::string key = path.substr(begin, dot - begin);
            if (key.empty()) {
                throw UsageError("--set: empty key segment in '" + path + "'");
            }
            if (dot == std::string::npos) {
                (*node)[key] = value;
                break;
            }
            node = &(*node)[key];
            begin = dot + 1;
        }
    }
}

json merge_patch(json base, const json& patch) {
    base.merge_patch(patch);
    return base;
}

struct RunConfig {
    BackboneConfig backbone;
    PeftConfig peft;
    TrainConfig train;
    HeadConfig head;
    std::vector<uint64_t> seeds; // one training per fold per seed
    std::filesystem::path manifest;
    SplitScheme scheme = SplitScheme::k_fold_speaker_independent;
    int64_t k = 5;
};

json default_config() {
    json j;
    j["backbone_preset"] = "toy";
    j["peft"] = {{"kind", "none"}, {"e", 128}, {"l", 5}, {"r", 8}};
    uint64_t seed = 0;
    if (const char* env = std::getenv("PEFT_SER_SEED")) {
        seed = std::strtoull(env, nullptr, 10);
    }
    j["train"] = {{"lr", 5e-4}, {"batch_size", 32}, {"max_epochs", 30},
                  {"seed", seed}, {"augment", true}};
    j["data"] = {{"manifest", ""},
                 {"scheme", {{"kind", "k_fold_speaker_independent"}, {"k", 5}}},
                 {"frame_rate", 10.0},
                 {"max_seconds", 6.0}};
    j["head"] = {{"conv_dim", 256}, {"n_classes", 4}};
    return j;
}

json load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw UsageError("config file not found: " + path.string());
    }
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw UsageError("config " + path.string() + ": " + e.what());
    }
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
    check_keys(j, {"backbone_preset", "geometry", "peft", "train", "data", "head"}, "config");
    RunConfig rc;

    if (j.contains("geometry")) {
        if (j.contains("backbone_preset") && !j.at("backbone_preset").is_null()) {
            throw UsageError("config: give either backbone_preset or geometry, not both");
        }
        const json& g = j.at("geometry");
        check_keys(g, {"n_layers", "hidden", "n_heads", "ffn_dim", "max_positions",
                       "frontend_in"},
                   "geometry");
        rc.backbone.n_layers = g.value("n_layers", rc.backbone.n_layers);
        rc.backbone.hidden = g.value("hidden", rc.backbone.hidden);
        rc.backbone.n_heads = g.value("n_heads", rc.backbone.n_heads);
        rc.backbone.ffn_dim = g.value("ffn_dim", rc.backbone.ffn_dim);
        rc.backbone.max_positions = g.value("max_positions", rc.backbone.max_positions);
        rc.backbone.frontend_in = g.value("frontend_in", rc.backbone.frontend_in);
    } else {
        rc.backbone = preset_config(j.at("backbone_preset").get<std::string>());
    }
    rc.backbone.validate();

    const json& p = j.at("peft");
    check_keys(p, {"kind", "e", "l", "r"}, "peft");
    rc.peft.kind = peft_kind_from_name(p.at("kind").get<std::string>());
    rc.peft.bottleneck = p.value("e", rc.peft.bottleneck);
    rc.peft.prompt_len = p.value("l", rc.peft.prompt_len);
    rc.peft.rank = p.value("r", rc.peft.rank);
    rc.peft.validate();

    const json& t = j.at("train");
    check_keys(t, {"lr", "batch_size", "max_epochs", "seed", "seeds", "augment"}, "train");
    rc.train.lr = t.value("lr", rc.train.lr);
    rc.train.batch_size = t.value("batch_size", rc.train.batch_size);
    rc.train.max_epochs = t.value("max_epochs", rc.train.max_epochs);
    rc.train.seed = t.value("seed", rc.train.seed);
    rc.train.augment_train = t.value("augment", rc.train.augment_train);
    rc.train.peft = rc.peft;
    if (t.contains("seeds")) {
        rc.seeds = t.at("seeds").get<std::vector<uint64_t>>();
        if (rc.seeds.empty()) {
            throw UsageError("config: train.seeds must not be empty");
        }
    } else {
        rc.seeds = {rc.train.seed};
    }

    const json& d = j.at("data");
    check_keys(d, {"manifest", "scheme", "frame_rate", "max_seconds"}, "data");
    const std::string manifest = d.at("manifest").get<std::string>();
    if (manifest.empty()) {
        throw UsageError("config: data.manifest is required");
    }
    std::filesystem::path mpath(manifest);
    rc.manifest = mpath.is_absolute() ? mpath : base_dir / mpath;
    rc.train.frame_rate = d.value("frame_rate", rc.train.frame_rate);
    rc.train.max_seconds = d.value("max_seconds", rc.train.max_seconds);
    const json& s = d.at("scheme");
    check_keys(s, {"kind", "k"}, "scheme");
    rc.scheme = split_scheme_from_name(s.at("kind").get<std::string>());
    rc.k = s.value("k", rc.k);

    const json& h = j.at("head");
    check_keys(h, {"conv_dim", "n_classes"}, "head");
    rc.head.n_layers_in = rc.backbone.n_layers;
    rc.head.hidden_in = rc.backbone.hidden;
    rc.head.conv_dim = h.value("conv_dim", rc.head.conv_dim);
    rc.head.n_classes = h.value("n_classes", rc.head.n_classes);
    rc.head.validate();
    rc.train.validate();
    return rc;
}

void ensure_fresh_report(const std::filesystem::path& out_dir, const std::string& name,
                         bool force) {
    std::filesystem::create_directories(out_dir);
    if (!force && std::filesystem::exists(out_dir / name)) {
        throw UsageError(name + " already exists in " + out_dir.string() +
                         "; pass --force to overwrite");
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot write " + path.string());
    }
    os << text;
}

json confusion_json(const EvalReport& report) {
    json rows = json::array();
    for (int64_t r = 0; r < report.n_classes; ++r) {
        json row = json::array();
        for (int64_t c = 0; c < report.n_classes; ++c) {
            row.push_back(report.confusion[static_cast<size_t>(r * report.n_classes + c)]);
        }
        rows.push_back(row);
    }
    return rows;
}

json eval_json(const EvalReport& report) {
    json j;
    j["confusion"] = confusion_json(report);
    j["uar"] = report.uar;
    j["per_fold"] = report.per_fold_uar;
    j["mu"] = report.uar_mean;
    j["sigma"] = report.uar_std;
    if (report.fairness) {
        j["fairness"] = {{"dem_parity", report.fairness->dem_parity},
                         {"eq_odds", report.fairness->eq_odds}};
        if (report.fairness_fold_mean) {
            j["fairness"]["dem_parity_fold_mean"] = report.fairness_fold_mean->dem_parity;
            j["fairness"]["eq_odds_fold_mean"] = report.fairness_fold_mean->eq_odds;
        }
    }
    j["warnings"] = report.warnings;
    return j;
}

std::string eval_csv(const EvalReport& aggregate_report,
                     const std::vector<EvalReport>& folds) {
    std::string csv = "fold,uar,dem_parity,eq_odds\n";
    for (size_t i = 0; i < folds.size(); ++i) {
        csv += std::to_string(i) + "," + std::to_string(folds[i].uar);
        if (folds[i].fairness) {
            csv += "," + std::to_string(folds[i].fairness->dem_parity) + "," +
                   std::to_string(folds[i].fairness->eq_odds);
        } else {
            csv += ",,";
        }
        csv += "\n";
    }
    csv += "mean," + std::to_string(aggregate_report.uar_mean);
    if (aggregate_report.fairness) {
        csv += "," + std::to_string(aggregate_report.fairness->dem_parity) + "," +
               std::to_string(aggregate_report.fairness->eq_odds);
    } else {
        csv += ",,";
    }
    csv += "\n";
    return csv;
}

json train_report_json(const TrainReport& report) {
    return {{"train_loss", report.train_loss},
            {"val_uar", report.val_uar},
            {"best_epoch", report.best_epoch},
            {"best_val_uar", report.best_val_uar},
            {"checkpoint", report.checkpoint_dir}};
}

json peft_point_json(const PeftConfig& p) {
    json j{{"kind", peft_kind_name(p.kind)}};
    switch (p.kind) {
    case PeftKind::adapter:
    case PeftKind::parallel_adapter:
        j["e"] = p.bottleneck;
        break;
    case PeftKind::prompt:
        j["l"] = p.prompt_len;
        break;
    case PeftKind::lora:
        j["r"] = p.rank;
        break;
    case PeftKind::none:
        break;
    }
    return j;
}

int cmd_synth_data(int64_t n_per_class, int64_t n_speakers, uint64_t seed, int64_t feature_dim,
                   const std::string& out_dir, bool force) {
    SynthConfig cfg{n_per_class, n_speakers, seed, feature_dim};
    ensure_fresh_report(out_dir, "manifest.jsonl", force);
    const auto entries = synth_corpus(cfg, out_dir);
    json j{{"entries", entries.size()},
           {"manifest", (std::filesystem::path(out_dir) / "manifest.jsonl").string()},
           {"n_speakers", n_speakers},
           {"feature_dim", feature_dim}};
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, bool force,
              const std::vector<std::string>& overrides) {
    const auto started = std::chrono::steady_clock::now();
    const std::filesystem::path cfg_path(config_path);
    json merged = merge_patch(default_config(), load_config_file(cfg_path));
    apply_overrides(merged, overrides);
    const RunConfig rc = parse_run_config(merged, cfg_path.parent_path());

    ensure_fresh_report(out_dir, "report.json", force);
    const auto entries = load_manifest(rc.manifest);
    const auto folds = split_folds(entries, rc.scheme, rc.k);
    const std::filesystem::path data_dir = rc.manifest.parent_path();

    // the backbone stands in for one fixed pre-trained encoder across seeds
    Backbone backbone = build_backbone(rc.backbone, backbone_seed(rc.seeds.front()));
    freeze(backbone);

    json fold_reports = json::array();
    std::vector<EvalReport> fold_evals;
    for (size_t i = 0; i < folds.size(); ++i) {
        for (uint64_t seed : rc.seeds) {
            TrainConfig run_cfg = rc.train;
            run_cfg.seed = seed;
            PeftState peft = init_peft(rc.peft, rc.backbone, peft_seed(seed));
            HeadState head = init_head(rc.head, head_seed(seed));
            PeftState* peft_ptr = rc.peft.kind == PeftKind::none ? nullptr : &peft;
            TrainReport report =
                train(backbone, peft_ptr, head, folds[i], run_cfg, data_dir);
            std::string ckpt_rel = "fold" + std::to_string(i);
            if (rc.seeds.size() > 1) {
                ckpt_rel += "/seed" + std::to_string(seed);
            }
            ckpt_rel += "/checkpoint";
            const std::filesystem::path ckpt = std::filesystem::path(out_dir) / ckpt_rel;
            std::filesystem::create_directories(ckpt);
            save_checkpoint(ckpt, backbone, peft_ptr, head);
            report.checkpoint_dir = ckpt_rel; // relative keeps report.json reproducible
            EvalReport eval_report = evaluate_split(backbone, peft_ptr, head, folds[i].test,
                                                    data_dir, rc.train.frame_rate,
                                                    rc.train.max_seconds);
            json fj = train_report_json(report);
            fj["fold"] = i;
            fj["seed"] = seed;
            fj["test_uar"] = eval_report.uar;
            fold_reports.push_back(fj);
            fold_evals.push_back(std::move(eval_report));
        }
    }
    const EvalReport combined = aggregate(fold_evals);

    json report;
    report["config"] = merged;
    report["peft_trainable"] = peft_param_count(rc.backbone, rc.peft);
    report["head_trainable"] = head_param_count(rc.head);
    report["folds"] = fold_reports;
    report["aggregate"] = eval_json(combined);
    write_text(std::filesystem::path(out_dir) / "report.json", report.dump(2) + "\n");
    write_text(std::filesystem::path(out_dir) / "eval.json",
               eval_json(combined).dump(2) + "\n");

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_text(std::filesystem::path(out_dir) / "meta.json",
               json{{"wall_seconds", wall}}.dump(2) + "\n");
    std::cout << json{{"uar_mean", combined.uar_mean}, {"uar_std", combined.uar_std},
                      {"runs", fold_evals.size()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& values_csv,
              const std::string& out_dir, int64_t jobs, bool force,
              const std::vector<std::string>& overrides) {
    const std::filesystem::path cfg_path(config_path);
    json merged = merge_patch(default_config(), load_config_file(cfg_path));
    apply_overrides(merged, overrides);
    const RunConfig rc = parse_run_config(merged, cfg_path.parent_path());
    if (rc.peft.kind == PeftKind::none) {
        throw UsageError("sweep: peft.kind must name a mechanism to sweep");
    }

    std::vector<int64_t> values;
    {
        std::string token;
        for (char c : values_csv + ",") {
            if (c == ',') {
                if (!token.empty()) {
                    values.push_back(std::stoll(token));
                    token.clear();
                }
            } else {
                token += c;
            }
        }
    }
    if (values.empty()) {
        throw UsageError("sweep: --values is empty");
    }

    std::vector<PeftConfig> grid;
    for (int64_t v : values) {
        PeftConfig p = rc.peft;
        switch (p.kind) {
        case PeftKind::adapter:
        case PeftKind::parallel_adapter:
            p.bottleneck = v;
            break;
        case PeftKind::prompt:
            p.prompt_len = v;
            break;
        case PeftKind::lora:
            p.rank = v;
            break;
        case PeftKind::none:
            break;
        }
        grid.push_back(p);
    }

    ensure_fresh_report(out_dir, "sweep.json", force);
    const auto entries = load_manifest(rc.manifest);
    const auto folds = split_folds(entries, rc.scheme, rc.k);
    const auto points =
        sweep(rc.backbone, rc.head, grid, folds, rc.train, rc.manifest.parent_path(), jobs);

    json out = json::array();
    for (const SweepPoint& point : points) {
        json pj;
        pj["peft"] = peft_point_json(point.peft);
        pj["peft_trainable"] = point.peft_trainable;
        pj["failed"] = point.failed;
        if (point.failed) {
            pj["error"] = point.error;
        } else {
            pj["uar_mean"] = point.eval.uar_mean;
            pj["uar_std"] = point.eval.uar_std;
            pj["per_fold"] = point.eval.per_fold_uar;
        }
        out.push_back(pj);
    }
    write_text(std::filesystem::path(out_dir) / "sweep.json",
               json{{"config", merged}, {"points", out}}.dump(2) + "\n");
    std::cout << json{{"points", points.size()}}.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& manifest_path,
             const std::string& out_dir, bool csv, double frame_rate, bool force) {
    ensure_fresh_report(out_dir, "eval.json", force);
    Checkpoint ckpt = load_checkpoint(checkpoint_dir);
    const std::filesystem::path manifest(manifest_path);
    const auto entries = load_manifest(manifest);
    const PeftState* peft = ckpt.peft ? &*ckpt.peft : nullptr;
    EvalReport report = evaluate_split(ckpt.backbone, peft, ckpt.head, entries,
                                       manifest.parent_path(), frame_rate);
    write_text(std::filesystem::path(out_dir) / "eval.json", eval_json(report).dump(2) + "\n");
    if (csv) {
        write_text(std::filesystem::path(out_dir) / "eval.csv", eval_csv(report, {report}));
    }
    std::cout << json{{"uar", report.uar}, {"entries", entries.size()}}.dump() << "\n";
    return 0;
}

int cmd_count_params(const std::string& preset, const std::string& peft_kind,
                     int64_t bottleneck, int64_t prompt_len, int64_t rank, bool table) {
    if (table) {
        json rows = json::array();
        for (const CountRow& row : count_params_table()) {
            rows.push_back({{"architecture", row.architecture},
                            {"preset", row.preset},
                            {"downstream", row.downstream},
                            {"downstream_m", format_millions(row.downstream)},
                            {"adapter", row.adapter},
                            {"adapter_m", format_millions(row.adapter)},
                            {"prompt", row.prompt},
                            {"prompt_m", format_millions(row.prompt)},
                            {"lora", row.lora},
                            {"lora_m", format_millions(row.lora)}});
        }
        json j;
        j["rows"] = rows;
        j["note"] = "adapter e=128, prompt l=5, lora r=8 on the first feed-forward "
                    "projection; whisper-tiny-geom uses hidden 384 and whisper-base-geom "
                    "6 layers, the geometries that reproduce the reference counts exactly";
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    const BackboneConfig backbone = preset_config(preset);
    PeftConfig peft;
    peft.kind = peft_kind_from_name(peft_kind);
    peft.bottleneck = bottleneck;
    peft.prompt_len = prompt_len;
    peft.rank = rank;
    HeadConfig head;
    head.n_layers_in = backbone.n_layers;
    head.hidden_in = backbone.hidden;
    const ParamCounts counts = count_params(backbone, peft, head);
    std::cout << json{{"backbone_frozen", counts.backbone_frozen},
                      {"peft_trainable", counts.peft_trainable},
                      {"head_trainable", counts.head_trainable}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_gradcheck(uint64_t seed, int64_t directions, double step, double threshold) {
    const GradCheckReport report = gradcheck_suite(seed, directions, step);
    json per_kind;
    for (const auto& [kind, err] : report.per_kind) {
        per_kind[kind] = err;
    }
    std::cout << json{{"max_rel_err", report.max_rel_err},
                      {"per_kind", per_kind},
                      {"threshold", threshold}}
                     .dump()
              << "\n";
    if (!(report.max_rel_err < threshold)) {
        std::cerr << "error: gradcheck max relative error " << report.max_rel_err
                  << " exceeds " << threshold << "\n";
        return 3;
    }
    return 0;
}

int cmd_fairness(const std::string& predictions_path, int64_t n_classes) {
    std::ifstream is(predictions_path);
    if (!is) {
        throw DataError("fairness: cannot open " + predictions_path);
    }
    std::vector<int64_t> preds, labels;
    std::vector<Gender> genders;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const json j = json::parse(line);
            preds.push_back(j.at("pred").get<int64_t>());
            labels.push_back(j.at("label").get<int64_t>());
            genders.push_back(gender_from_name(j.at("gender").get<std::string>()));
        } catch (const json::exception& e) {
            throw DataError("fairness: " + predictions_path + " line " +
                            std::to_string(line_no) + ": " + e.what());
        }
    }
    std::vector<std::string> warnings;
    const double dp = demographic_parity(preds, genders, n_classes, &warnings);
    const double eo = equality_of_odds(preds, labels, genders, n_classes, &warnings);
    std::cout << json{{"dem_parity", dp}, {"eq_odds", eo}, {"warnings", warnings}}.dump()
              << "\n";
    return 0;
}

} // namespace

std::vector<CountRow> count_params_table() {
    const std::vector<std::pair<std::string, std::string>> presets = {
        {"Whisper Tiny", "whisper-tiny-geom"},
        {"Whisper Base", "whisper-base-geom"},
        {"Whisper Small", "whisper-small-geom"},
        {"W2V 2.0 Base", "w2v2-base-geom"},
        {"WavLM Base+", "wavlm-base-plus-geom"}};
    std::vector<CountRow> rows;
    for (const auto& [name, preset] : presets) {
        const BackboneConfig backbone = preset_config(preset);
        HeadConfig head;
        head.n_layers_in = backbone.n_layers;
        head.hidden_in = backbone.hidden;
        CountRow row;
        row.architecture = name;
        row.preset = preset;
        row.downstream = head_param_count(head);
        PeftConfig adapter;
        adapter.kind = PeftKind::adapter;
        adapter.bottleneck = 128;
        row.adapter = peft_param_count(backbone, adapter);
        PeftConfig prompt;
        prompt.kind = PeftKind::prompt;
        prompt.prompt_len = 5;
        row.prompt = peft_param_count(backbone, prompt);
        PeftConfig lora;
        lora.kind = PeftKind::lora;
        lora.rank = 8;
        row.lora = peft_param_count(backbone, lora);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_millions(int64_t count) {
    const double m = std::round(static_cast<double>(count) / 1e6 * 100.0) / 100.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f M", m);
    return buf;
}

int run(int argc, const char* const* argv) {
    CLI::App app{"parameter-efficient fine-tuning workbench for speech emotion recognition"};
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic labeled corpus");
    int64_t n_per_class = 50, n_speakers = 10, feature_dim = 8;
    uint64_t synth_seed = 0;
    std::string synth_out;
    bool synth_force = false;
    synth->add_option("--n-per-class", n_per_class, "utterances per class");
    synth->add_option("--n-speakers", n_speakers, "distinct speakers");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--feature-dim", feature_dim, "frame feature width");
    synth->add_option("--out-dir", synth_out, "output directory")->required();
    synth->add_flag("--force", synth_force, "overwrite an existing corpus");

    // train
    auto* train_cmd = app.add_subcommand("train", "train on a manifest with the configured PEFT");
    std::string train_config, train_out;
    bool train_force = false;
    std::vector<std::string> train_overrides;
    train_cmd->add_option("--config", train_config, "JSON config path")->required();
    train_cmd->add_option("--out-dir", train_out, "output directory")->required();
    train_cmd->add_flag("--force", train_force, "overwrite an existing report");
    train_cmd->add_option("--set", train_overrides, "dotted.key=value config override");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "train once per hyperparameter value");
    std::string sweep_config, sweep_values, sweep_out;
    int64_t sweep_jobs = 1;
    bool sweep_force = false;
    std::vector<std::string> sweep_overrides;
    sweep_cmd->add_option("--config", sweep_config, "JSON config path")->required();
    sweep_cmd->add_option("--values", sweep_values, "comma-separated values of the active "
                                                    "mechanism's hyperparameter")
        ->required();
    sweep_cmd->add_option("--out-dir", sweep_out, "output directory")->required();
    sweep_cmd->add_option("--jobs", sweep_jobs, "concurrent sweep points");
    sweep_cmd->add_flag("--force", sweep_force, "overwrite an existing report");
    sweep_cmd->add_option("--set", sweep_overrides, "dotted.key=value config override");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    std::string eval_ckpt, eval_manifest, eval_out;
    bool eval_csv_flag = false, eval_force = false;
    double eval_frame_rate = 10.0;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "manifest to evaluate")->required();
    eval_cmd->add_option("--out-dir", eval_out, "output directory")->required();
    eval_cmd->add_option("--frame-rate", eval_frame_rate, "frames per second");
    eval_cmd->add_flag("--csv", eval_csv_flag, "also emit eval.csv");
    eval_cmd->add_flag("--force", eval_force, "overwrite an existing report");

    // count-params
    auto* count_cmd = app.add_subcommand("count-params", "parameter accounting");
    std::string count_preset = "w2v2-base-geom", count_kind = "none";
    int64_t count_bottleneck = 128, count_prompt = 5, count_rank = 8;
    bool count_table = false;
    count_cmd->add_option("--preset", count_preset, "backbone geometry preset");
    count_cmd->add_option("--peft", count_kind, "mechanism kind");
    count_cmd->add_option("--bottleneck", count_bottleneck, "adapter bottleneck e");
    count_cmd->add_option("--prompt-len", count_prompt, "prompt length l");
    count_cmd->add_option("--rank", count_rank, "LoRA rank r");
    count_cmd->add_flag("--table", count_table, "print the full preset table");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    uint64_t grad_seed = 0;
    int64_t grad_directions = 20;
    double grad_step = 1e-4, grad_threshold = 1e-4;
    grad_cmd->add_option("--seed", grad_seed, "probe seed");
    grad_cmd->add_option("--directions", grad_directions, "coordinates probed per tensor");
    grad_cmd->add_option("--step", grad_step, "central-difference step");
    grad_cmd->add_option("--threshold", grad_threshold, "max relative error allowed");

    // fairness
    auto* fair_cmd = app.add_subcommand("fairness", "fairness scores from a predictions file");
    std::string fair_preds;
    int64_t fair_classes = 4;
    fair_cmd->add_option("--predictions", fair_preds, "JSONL of {pred,label,gender}")
        ->required();
    fair_cmd->add_option("--n-classes", fair_classes, "number of classes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(synth)) {
            return cmd_synth_data(n_per_class, n_speakers, synth_seed, feature_dim, synth_out,
                                  synth_force);
        }
        if (app.got_subcommand(train_cmd)) {
            return cmd_train(train_config, train_out, train_force, train_overrides);
        }
        if (app.got_subcommand(sweep_cmd)) {
            return cmd_sweep(sweep_config, sweep_values, sweep_out, sweep_jobs, sweep_force,
                             sweep_overrides);
        }
        if (app.got_subcommand(eval_cmd)) {
            return cmd_eval(eval_ckpt, eval_manifest, eval_out, eval_csv_flag, eval_frame_rate,
                            eval_force);
        }
        if (app.got_subcommand(count_cmd)) {
            return cmd_count_params(count_preset, count_kind, count_bottleneck, count_prompt,
                                    count_rank, count_table);
        }
        if (app.got_subcommand(grad_cmd)) {
            return cmd_gradcheck(grad_seed, grad_directions, grad_step, grad_threshold);
        }
        if (app.got_subcommand(fair_cmd)) {
            return cmd_fairness(fair_preds, fair_classes);
        }
        throw UsageError("no subcommand given");
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace peftser::cli
