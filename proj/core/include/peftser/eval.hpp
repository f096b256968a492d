#pragma once

#include <optional>
#include <string>
#include <vector>

#include "peftser/data.hpp"

namespace peftser {

struct PredictionRecord {
    int64_t pred = 0;
    int64_t label = 0;
    Gender gender = Gender::unknown;
};

struct FairnessScores {
    double dem_parity = 0.0; // percent
    double eq_odds = 0.0;    // percent
};

struct EvalReport {
    int64_t n_classes = kNumClasses;
    std::vector<int64_t> confusion;   // row-major, rows = truth, cols = prediction
    double uar = 0.0;                 // percent
    std::vector<double> per_fold_uar; // one entry per contributing fold
    double uar_mean = 0.0;
    double uar_std = 0.0; // population standard deviation
    std::vector<PredictionRecord> records;
    std::optional<FairnessScores> fairness;           // pooled over `records`
    std::optional<FairnessScores> fairness_fold_mean; // mean of per-fold scores
    std::vector<std::string> warnings;
};

std::vector<int64_t> confusion_matrix(const std::vector<int64_t>& preds,
                                      const std::vector<int64_t>& labels, int64_t n_classes);

// Unweighted average recall in percent. Classes without true instances are
// excluded with a warning.
double uar(const std::vector<int64_t>& confusion, int64_t n_classes,
           std::vector<std::string>* warnings = nullptr);

// Mean absolute gap between the groups' prediction-rate distributions,
// averaged over classes, in percent. Unknown-gender records are ignored.
double demographic_parity(const std::vector<int64_t>& preds, const std::vector<Gender>& genders,
                          int64_t n_classes, std::vector<std::string>* warnings = nullptr);

// The same gap conditioned on the true label, averaged over the true classes
// where both groups are represented; empty strata are skipped with a warning.
double equality_of_odds(const std::vector<int64_t>& preds, const std::vector<int64_t>& labels,
                        const std::vector<Gender>& genders, int64_t n_classes,
                        std::vector<std::string>* warnings = nullptr);

// Single-fold report; fairness is filled when both genders appear.
EvalReport evaluate(const std::vector<PredictionRecord>& records, int64_t n_classes = kNumClasses);

// Cross-fold aggregation: summed confusions, mean/std of per-fold UARs, and
// fairness both as the mean of fold scores and pooled over all predictions.
EvalReport aggregate(const std::vector<EvalReport>& folds);

} // namespace peftser
