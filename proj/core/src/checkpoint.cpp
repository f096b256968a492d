#include "peftser/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "peftser/serialize.hpp"

namespace peftser {

namespace {

std::string layer_prefix(int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "layer%02lld_", static_cast<long long>(i));
    return buf;
}

std::vector<std::pair<std::string, Tensor>> backbone_tensors(const Backbone& b) {
    std::vector<std::pair<std::string, Tensor>> named = {
        {"frontend_w", b.frontend_w}, {"frontend_b", b.frontend_b}, {"pos_emb", b.pos_emb}};
    for (size_t i = 0; i < b.layers.size(); ++i) {
        const EncoderLayer& l = b.layers[i];
        const std::string p = layer_prefix(static_cast<int64_t>(i));
        named.emplace_back(p + "ln1_gain", l.ln1_gain);
        named.emplace_back(p + "ln1_bias", l.ln1_bias);
        named.emplace_back(p + "wq", l.wq);
        named.emplace_back(p + "bq", l.bq);
        named.emplace_back(p + "wk", l.wk);
        named.emplace_back(p + "bk", l.bk);
        named.emplace_back(p + "wv", l.wv);
        named.emplace_back(p + "bv", l.bv);
        named.emplace_back(p + "wo", l.wo);
        named.emplace_back(p + "bo", l.bo);
        named.emplace_back(p + "ln2_gain", l.ln2_gain);
        named.emplace_back(p + "ln2_bias", l.ln2_bias);
        named.emplace_back(p + "w1", l.w1);
        named.emplace_back(p + "b1", l.b1);
        named.emplace_back(p + "w2", l.w2);
        named.emplace_back(p + "b2", l.b2);
    }
    return named;
}

std::vector<std::pair<std::string, Tensor>> peft_tensors(const PeftState& s) {
    std::vector<std::pair<std::string, Tensor>> named;
    for (size_t i = 0; i < s.layers.size(); ++i) {
        const PeftLayerParams& p = s.layers[i];
        const std::string prefix = layer_prefix(static_cast<int64_t>(i));
        switch (s.config.kind) {
        case PeftKind::adapter:
        case PeftKind::parallel_adapter:
            named.emplace_back(prefix + "down_w", p.down_w);
            named.emplace_back(prefix + "down_b", p.down_b);
            named.emplace_back(prefix + "up_w", p.up_w);
            named.emplace_back(prefix + "up_b", p.up_b);
            break;
        case PeftKind::prompt:
            named.emplace_back(prefix + "prompts", p.prompts);
            break;
        case PeftKind::lora:
            named.emplace_back(prefix + "lora_down", p.lora_down);
            named.emplace_back(prefix + "lora_up", p.lora_up);
            break;
        case PeftKind::none:
            break;
        }
    }
    return named;
}

std::vector<std::pair<std::string, Tensor>> head_tensors(const HeadState& s) {
    return {{"layer_logits", s.layer_logits},
            {"conv1_w", s.conv1_w},
            {"conv1_b", s.conv1_b},
            {"conv2_w", s.conv2_w},
            {"conv2_b", s.conv2_b},
            {"conv3_w", s.conv3_w},
            {"conv3_b", s.conv3_b},
            {"fc1_w", s.fc1_w},
            {"fc1_b", s.fc1_b},
            {"fc2_w", s.fc2_w},
            {"fc2_b", s.fc2_b}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("checkpoint: cannot write " + path.string());
    }
    os << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("checkpoint: cannot open " + path.string());
    }
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: " + path.string() + ": " + e.what());
    }
}

Tensor load_named(const std::filesystem::path& dir, const std::string& name,
                  bool requires_grad) {
    Tensor t = load_tensor(dir / (name + ".tsr"));
    t.set_requires_grad(requires_grad);
    return t;
}

} // namespace

void save_checkpoint(const std::filesystem::path& dir, const Backbone& backbone,
                     const PeftState* peft, const HeadState& head) {
    std::filesystem::create_directories(dir / "backbone");
    std::filesystem::create_directories(dir / "head");

    nlohmann::json bj;
    bj["n_layers"] = backbone.config.n_layers;
    bj["hidden"] = backbone.config.hidden;
    bj["n_heads"] = backbone.config.n_heads;
    bj["ffn_dim"] = backbone.config.ffn_dim;
    bj["max_positions"] = backbone.config.max_positions;
    bj["frontend_in"] = backbone.config.frontend_in;
    bj["frozen"] = backbone.frozen;
    write_json(dir / "backbone.json", bj);
    for (const auto& [name, tensor] : backbone_tensors(backbone)) {
        save_tensor(dir / "backbone" / (name + ".tsr"), tensor);
    }

    if (peft && peft->config.kind != PeftKind::none) {
        std::filesystem::create_directories(dir / "peft");
        nlohmann::json pj;
        pj["kind"] = peft_kind_name(peft->config.kind);
        if (peft->config.kind == PeftKind::adapter ||
            peft->config.kind == PeftKind::parallel_adapter) {
            pj["e"] = peft->config.bottleneck;
        } else if (peft->config.kind == PeftKind::prompt) {
            pj["l"] = peft->config.prompt_len;
        } else {
            pj["r"] = peft->config.rank;
        }
        pj["n_layers"] = backbone.config.n_layers;
        pj["hidden"] = backbone.config.hidden;
        write_json(dir / "peft.json", pj);
        for (const auto& [name, tensor] : peft_tensors(*peft)) {
            save_tensor(dir / "peft" / (name + ".tsr"), tensor);
        }
    }

    nlohmann::json hj;
    hj["n_layers_in"] = head.config.n_layers_in;
    hj["hidden_in"] = head.config.hidden_in;
    hj["conv_dim"] = head.config.conv_dim;
    hj["n_classes"] = head.config.n_classes;
    write_json(dir / "head.json", hj);
    for (const auto& [name, tensor] : head_tensors(head)) {
        save_tensor(dir / "head" / (name + ".tsr"), tensor);
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    Checkpoint ckpt;

    const nlohmann::json bj = read_json(dir / "backbone.json");
    BackboneConfig config;
    config.n_layers = bj.at("n_layers").get<int64_t>();
    config.hidden = bj.at("hidden").get<int64_t>();
    config.n_heads = bj.at("n_heads").get<int64_t>();
    config.ffn_dim = bj.at("ffn_dim").get<int64_t>();
    config.max_positions = bj.at("max_positions").get<int64_t>();
    config.frontend_in = bj.at("frontend_in").get<int64_t>();
    config.validate();
    const bool frozen = bj.at("frozen").get<bool>();

    Backbone& b = ckpt.backbone;
    b.config = config;
    b.frozen = frozen;
    const std::filesystem::path bdir = dir / "backbone";
    b.frontend_w = load_named(bdir, "frontend_w", !frozen);
    b.frontend_b = load_named(bdir, "frontend_b", !frozen);
    b.pos_emb = load_named(bdir, "pos_emb", !frozen);
    for (int64_t i = 0; i < config.n_layers; ++i) {
        const std::string p = layer_prefix(i);
        EncoderLayer layer;
        layer.ln1_gain = load_named(bdir, p + "ln1_gain", !frozen);
        layer.ln1_bias = load_named(bdir, p + "ln1_bias", !frozen);
        layer.wq = load_named(bdir, p + "wq", !frozen);
        layer.bq = load_named(bdir, p + "bq", !frozen);
        layer.wk = load_named(bdir, p + "wk", !frozen);
        layer.bk = load_named(bdir, p + "bk", !frozen);
        layer.wv = load_named(bdir, p + "wv", !frozen);
        layer.bv = load_named(bdir, p + "bv", !frozen);
        layer.wo = load_named(bdir, p + "wo", !frozen);
        layer.bo = load_named(bdir, p + "bo", !frozen);
        layer.ln2_gain = load_named(bdir, p + "ln2_gain", !frozen);
        layer.ln2_bias = load_named(bdir, p + "ln2_bias", !frozen);
        layer.w1 = load_named(bdir, p + "w1", !frozen);
        layer.b1 = load_named(bdir, p + "b1", !frozen);
        layer.w2 = load_named(bdir, p + "w2", !frozen);
        layer.b2 = load_named(bdir, p + "b2", !frozen);
        b.layers.push_back(std::move(layer));
    }

    if (std::filesystem::exists(dir / "peft.json")) {
        const nlohmann::json pj = read_json(dir / "peft.json");
        PeftConfig pc;
        pc.kind = peft_kind_from_name(pj.at("kind").get<std::string>());
        if (pj.contains("e")) {
            pc.bottleneck = pj.at("e").get<int64_t>();
        }
        if (pj.contains("l")) {
            pc.prompt_len = pj.at("l").get<int64_t>();
        }
        if (pj.contains("r")) {
            pc.rank = pj.at("r").get<int64_t>();
        }
        PeftState state;
        state.config = pc;
        const std::filesystem::path pdir = dir / "peft";
        for (int64_t i = 0; i < config.n_layers; ++i) {
            const std::string prefix = layer_prefix(i);
            PeftLayerParams params;
            switch (pc.kind) {
            case PeftKind::adapter:
            case PeftKind::parallel_adapter:
                params.down_w = load_named(pdir, prefix + "down_w", true);
                params.down_b = load_named(pdir, prefix + "down_b", true);
                params.up_w = load_named(pdir, prefix + "up_w", true);
                params.up_b = load_named(pdir, prefix + "up_b", true);
                break;
            case PeftKind::prompt:
                params.prompts = load_named(pdir, prefix + "prompts", true);
                break;
            case PeftKind::lora:
                params.lora_down = load_named(pdir, prefix + "lora_down", true);
                params.lora_up = load_named(pdir, prefix + "lora_up", true);
                break;
            case PeftKind::none:
                break;
            }
            state.layers.push_back(std::move(params));
        }
        ckpt.peft = std::move(state);
    }

    const nlohmann::json hj = read_json(dir / "head.json");
    HeadConfig hc;
    hc.n_layers_in = hj.at("n_layers_in").get<int64_t>();
    hc.hidden_in = hj.at("hidden_in").get<int64_t>();
    hc.conv_dim = hj.at("conv_dim").get<int64_t>();
    hc.n_classes = hj.at("n_classes").get<int64_t>();
    hc.validate();
    HeadState& h = ckpt.head;
    h.config = hc;
    const std::filesystem::path hdir = dir / "head";
    h.layer_logits = load_named(hdir, "layer_logits", true);
    h.conv1_w = load_named(hdir, "conv1_w", true);
    h.conv1_b = load_named(hdir, "conv1_b", true);
    h.conv2_w = load_named(hdir, "conv2_w", true);
    h.conv2_b = load_named(hdir, "conv2_b", true);
    h.conv3_w = load_named(hdir, "conv3_w", true);
    h.conv3_b = load_named(hdir, "conv3_b", true);
    h.fc1_w = load_named(hdir, "fc1_w", true);
    h.fc1_b = load_named(hdir, "fc1_b", true);
    h.fc2_w = load_named(hdir, "fc2_w", true);
    h.fc2_b = load_named(hdir, "fc2_b", true);
    return ckpt;
}

} // namespace peftser
