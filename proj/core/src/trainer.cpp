#include "peftser/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "peftser/ops.hpp"

namespace peftser {

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor& p : params_) {
        m_.emplace_back(static_cast<size_t>(p.size()), 0.0);
        v_.emplace_back(static_cast<size_t>(p.size()), 0.0);
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) {
        p.zero_grad();
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad()) {
            continue;
        }
        auto data = p.mutable_data();
        auto grad = p.mutable_grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t j = 0; j < data.size(); ++j) {
            const double g = grad[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

int64_t Adam::param_count() const {
    int64_t n = 0;
    for (const Tensor& p : params_) {
        n += p.size();
    }
    return n;
}

std::vector<Tensor> trainable_parameters(const PeftState* peft, const HeadState& head) {
    std::vector<Tensor> params;
    if (peft && peft->config.kind != PeftKind::none) {
        params = peft->parameters();
    }
    for (const Tensor& t : head.parameters()) {
        params.push_back(t);
    }
    return params;
}

void TrainConfig::validate() const {
    if (lr <= 0.0) {
        throw UsageError("train config: lr must be > 0");
    }
    if (batch_size < 1) {
        throw UsageError("train config: batch_size must be >= 1");
    }
    if (max_epochs < 1) {
        throw UsageError("train config: max_epochs must be >= 1");
    }
    peft.validate();
}

int64_t predict(const Backbone& backbone, const PeftState* peft, const HeadState& head,
                const Tensor& frames) {
    NoGrad guard;
    const std::vector<Tensor> hiddens = backbone_forward(backbone, frames, peft);
    const Tensor logits = head_forward(hiddens, head);
    const auto values = logits.data();
    int64_t best = 0;
    for (int64_t c = 1; c < logits.size(); ++c) {
        if (values[static_cast<size_t>(c)] > values[static_cast<size_t>(best)]) {
            best = c;
        }
    }
    return best;
}

EvalReport evaluate_split(const Backbone& backbone, const PeftState* peft,
                          const HeadState& head, const std::vector<ManifestEntry>& entries,
                          const std::filesystem::path& data_dir, double frame_rate,
                          double max_seconds) {
    std::vector<PredictionRecord> records;
    records.reserve(entries.size());
    for (const ManifestEntry& entry : entries) {
        const FeatureSequence seq = load_entry_features(entry, data_dir, frame_rate, max_seconds);
        records.push_back({predict(backbone, peft, head, seq.frames), entry.label, entry.gender});
    }
    return evaluate(records, head.config.n_classes);
}

namespace {

struct LoadedSplit {
    std::vector<Tensor> frames;
    std::vector<int64_t> labels;
};

LoadedSplit load_split(const std::vector<ManifestEntry>& entries,
                       const std::filesystem::path& data_dir, const TrainConfig& cfg) {
    LoadedSplit split;
    for (const ManifestEntry& entry : entries) {
        split.frames.push_back(
            load_entry_features(entry, data_dir, cfg.frame_rate, cfg.max_seconds).frames);
        split.labels.push_back(entry.label);
    }
    return split;
}

double validation_uar(const Backbone& backbone, const PeftState* peft, const HeadState& head,
                      const LoadedSplit& val, int64_t n_classes) {
    std::vector<int64_t> preds;
    preds.reserve(val.frames.size());
    for (const Tensor& frames : val.frames) {
        preds.push_back(predict(backbone, peft, head, frames));
    }
    return uar(confusion_matrix(preds, val.labels, n_classes), n_classes);
}

} // namespace

TrainReport train(const Backbone& backbone, PeftState* peft, HeadState& head, const Fold& fold,
                  const TrainConfig& cfg, const std::filesystem::path& data_dir) {
    cfg.validate();
    if (!backbone.frozen) {
        throw UsageError("train: backbone must be frozen");
    }
    if (fold.train.empty()) {
        throw UsageError("train: empty train split");
    }
    if (fold.val.empty()) {
        throw UsageError("train: empty validation split");
    }
    if (peft && peft->config.kind != PeftKind::none &&
        static_cast<int64_t>(peft->layers.size()) != backbone.config.n_layers) {
        throw UsageError("train: peft state does not match backbone depth");
    }

    const auto started = std::chrono::steady_clock::now();
    const uint64_t checksum_before = parameter_checksum(backbone);

    const LoadedSplit train_split = load_split(fold.train, data_dir, cfg);
    const LoadedSplit val_split = load_split(fold.val, data_dir, cfg);

    std::vector<Tensor> params = trainable_parameters(peft, head);
    Adam optimizer(params, cfg.lr);
    Rng rng(cfg.seed);

    TrainReport report;
    double best = -1.0;
    std::vector<std::vector<double>> best_snapshot;

    const int64_t n_train = static_cast<int64_t>(train_split.frames.size());
    std::vector<int64_t> order(static_cast<size_t>(n_train));
    for (int64_t i = 0; i < n_train; ++i) {
        order[static_cast<size_t>(i)] = i;
    }

    for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (int64_t i = n_train - 1; i > 0; --i) {
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(rng.uniform_int(i + 1))]);
        }
        double epoch_loss = 0.0;
        int64_t batch_index = 0;
        for (int64_t begin = 0; begin < n_train; begin += cfg.batch_size, ++batch_index) {
            const int64_t end = std::min(begin + cfg.batch_size, n_train);
            Tape tape;
            std::vector<Tensor> logit_rows;
            std::vector<int64_t> labels;
            for (int64_t i = begin; i < end; ++i) {
                const int64_t ix = order[static_cast<size_t>(i)];
                Tensor frames = train_split.frames[static_cast<size_t>(ix)];
                if (cfg.augment_train) {
                    frames = augment({frames, cfg.frame_rate}, rng).frames;
                }
                const std::vector<Tensor> hiddens = backbone_forward(backbone, frames, peft);
                logit_rows.push_back(head_forward(hiddens, head));
                labels.push_back(train_split.labels[static_cast<size_t>(ix)]);
            }
            const Tensor loss = cross_entropy(stack_rows(logit_rows), labels);
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(batch_index));
            }
            optimizer.zero_grad();
            tape.backward(loss);
            optimizer.step();
            epoch_loss += loss_value * static_cast<double>(end - begin);
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(n_train));

        const double val = validation_uar(backbone, peft, head, val_split,
                                          head.config.n_classes);
        report.val_uar.push_back(val);
        if (val > best) {
            best = val;
            report.best_epoch = epoch;
            best_snapshot.clear();
            for (const Tensor& p : params) {
                best_snapshot.emplace_back(p.data().begin(), p.data().end());
            }
        }
    }

    for (size_t i = 0; i < params.size(); ++i) {
        std::copy(best_snapshot[i].begin(), best_snapshot[i].end(),
                  params[i].mutable_data().begin());
    }
    report.best_val_uar = best;

    if (parameter_checksum(backbone) != checksum_before) {
        throw NumericError("train: frozen backbone parameters changed");
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

namespace {

SweepPoint run_sweep_point(const BackboneConfig& backbone_cfg, const HeadConfig& head_cfg,
                           const PeftConfig& peft_cfg, const std::vector<Fold>& folds,
                           const TrainConfig& base, const std::filesystem::path& data_dir) {
    SweepPoint point;
    point.peft = peft_cfg;
    try {
        Backbone backbone = build_backbone(backbone_cfg, backbone_seed(base.seed));
        freeze(backbone);
        std::vector<EvalReport> fold_evals;
        for (const Fold& fold : folds) {
            PeftState peft = init_peft(peft_cfg, backbone_cfg, peft_seed(base.seed));
            HeadState head = init_head(head_cfg, head_seed(base.seed));
            TrainConfig cfg = base;
            cfg.peft = peft_cfg;
            PeftState* peft_ptr = peft_cfg.kind == PeftKind::none ? nullptr : &peft;
            point.fold_reports.push_back(train(backbone, peft_ptr, head, fold, cfg, data_dir));
            fold_evals.push_back(evaluate_split(backbone, peft_ptr, head, fold.test, data_dir,
                                                cfg.frame_rate, cfg.max_seconds));
            point.peft_trainable = peft_ptr ? peft.trainable_count() : 0;
        }
        point.eval = aggregate(fold_evals);
    } catch (const std::exception& e) {
        point.failed = true;
        point.error = e.what();
    }
    return point;
}

} // namespace

std::vector<SweepPoint> sweep(const BackboneConfig& backbone_cfg, const HeadConfig& head_cfg,
                              const std::vector<PeftConfig>& grid,
                              const std::vector<Fold>& folds, const TrainConfig& base,
                              const std::filesystem::path& data_dir, int64_t jobs) {
    if (grid.empty()) {
        throw UsageError("sweep: empty grid");
    }
    std::vector<SweepPoint> points(grid.size());
    if (jobs <= 1 || grid.size() == 1) {
        for (size_t i = 0; i < grid.size(); ++i) {
            points[i] = run_sweep_point(backbone_cfg, head_cfg, grid[i], folds, base, data_dir);
        }
        return points;
    }
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const size_t ix = next.fetch_add(1);
            if (ix >= grid.size()) {
                return;
            }
            points[ix] = run_sweep_point(backbone_cfg, head_cfg, grid[ix], folds, base, data_dir);
        }
    };
    std::vector<std::thread> threads;
    const size_t n_threads = std::min<size_t>(static_cast<size_t>(jobs), grid.size());
    threads.reserve(n_threads);
    for (size_t i = 0; i < n_threads; ++i) {
        threads.emplace_back(worker);
    }
    for (std::thread& t : threads) {
        t.join();
    }
    return points;
}

} // namespace peftser
