#pragma once

#include <filesystem>

#include "peftser/backbone.hpp"
#include "peftser/data.hpp"
#include "peftser/eval.hpp"
#include "peftser/head.hpp"
#include "peftser/peft.hpp"

namespace peftser {

class Adam {
  public:
    explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void zero_grad();
    void step();

    const std::vector<Tensor>& params() const { return params_; }
    int64_t param_count() const;

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

// PEFT plus head parameters; the frozen backbone contributes none.
std::vector<Tensor> trainable_parameters(const PeftState* peft, const HeadState& head);

struct TrainConfig {
    double lr = 5e-4;
    int64_t batch_size = 32;
    int64_t max_epochs = 30;
    uint64_t seed = 0;
    PeftConfig peft;
    bool augment_train = true;
    double frame_rate = 10.0;
    double max_seconds = 6.0;

    void validate() const;
};

struct TrainReport {
    std::vector<double> train_loss; // per epoch
    std::vector<double> val_uar;    // per epoch, percent
    int64_t best_epoch = -1;        // 0-based
    double best_val_uar = 0.0;
    double wall_seconds = 0.0;
    std::string checkpoint_dir;
};

// Argmax class for one utterance; records nothing on any tape.
int64_t predict(const Backbone& backbone, const PeftState* peft, const HeadState& head,
                const Tensor& frames);

EvalReport evaluate_split(const Backbone& backbone, const PeftState* peft,
                          const HeadState& head, const std::vector<ManifestEntry>& entries,
                          const std::filesystem::path& data_dir, double frame_rate = 10.0,
                          double max_seconds = 6.0);

// Adam on cross-entropy over shuffled batches; augmentation on training
// batches only. The states are left at the epoch with the best validation
// UAR, and the backbone checksum is verified unchanged.
TrainReport train(const Backbone& backbone, PeftState* peft, HeadState& head, const Fold& fold,
                  const TrainConfig& cfg, const std::filesystem::path& data_dir);

struct SweepPoint {
    PeftConfig peft;
    int64_t peft_trainable = 0;
    bool failed = false;
    std::string error;
    std::vector<TrainReport> fold_reports;
    EvalReport eval; // aggregated over the folds' test splits
};

// One full train + eval per grid point with identical seeds across points.
// Per-point failures are captured, not propagated. Points may run on up to
// `jobs` threads; each owns its tapes and states, sharing only read-only data.
std::vector<SweepPoint> sweep(const BackboneConfig& backbone_cfg, const HeadConfig& head_cfg,
                              const std::vector<PeftConfig>& grid,
                              const std::vector<Fold>& folds, const TrainConfig& base,
                              const std::filesystem::path& data_dir, int64_t jobs = 1);

// Seed derivation shared by the CLI and the sweep runner.
inline uint64_t backbone_seed(uint64_t seed) { return seed; }
inline uint64_t peft_seed(uint64_t seed) { return seed + 1; }
inline uint64_t head_seed(uint64_t seed) { return seed + 2; }

} // namespace peftser
