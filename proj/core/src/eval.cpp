#include "peftser/eval.hpp"

#include <cmath>

namespace peftser {

std::vector<int64_t> confusion_matrix(const std::vector<int64_t>& preds,
                                      const std::vector<int64_t>& labels, int64_t n_classes) {
    if (preds.size() != labels.size()) {
        throw UsageError("confusion_matrix: " + std::to_string(preds.size()) +
                         " predictions vs " + std::to_string(labels.size()) + " labels");
    }
    std::vector<int64_t> m(static_cast<size_t>(n_classes * n_classes), 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes || preds[i] < 0 || preds[i] >= n_classes) {
            throw DataError("confusion_matrix: class outside [0, " +
                            std::to_string(n_classes) + ")");
        }
        ++m[static_cast<size_t>(labels[i] * n_classes + preds[i])];
    }
    return m;
}

double uar(const std::vector<int64_t>& confusion, int64_t n_classes,
           std::vector<std::string>* warnings) {
    if (static_cast<int64_t>(confusion.size()) != n_classes * n_classes) {
        throw UsageError("uar: confusion size does not match " + std::to_string(n_classes) +
                         " classes");
    }
    double total = 0.0;
    int64_t counted = 0;
    for (int64_t c = 0; c < n_classes; ++c) {
        int64_t row = 0;
        for (int64_t j = 0; j < n_classes; ++j) {
            row += confusion[static_cast<size_t>(c * n_classes + j)];
        }
        if (row == 0) {
            if (warnings) {
                warnings->push_back("uar: class " + std::to_string(c) +
                                    " has no true instances and is excluded");
            }
            continue;
        }
        total += static_cast<double>(confusion[static_cast<size_t>(c * n_classes + c)]) /
                 static_cast<double>(row);
        ++counted;
    }
    if (counted == 0) {
        throw UsageError("uar: no class has a true instance");
    }
    return 100.0 * total / static_cast<double>(counted);
}

namespace {

struct GroupCounts {
    std::vector<int64_t> female, male;
    int64_t n_female = 0, n_male = 0;
};

GroupCounts prediction_counts(const std::vector<int64_t>& preds,
                              const std::vector<Gender>& genders, int64_t n_classes) {
    if (preds.size() != genders.size()) {
        throw UsageError("fairness: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(genders.size()) + " gender labels");
    }
    GroupCounts g;
    g.female.assign(static_cast<size_t>(n_classes), 0);
    g.male.assign(static_cast<size_t>(n_classes), 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] < 0 || preds[i] >= n_classes) {
            throw DataError("fairness: prediction outside [0, " + std::to_string(n_classes) +
                            ")");
        }
        if (genders[i] == Gender::female) {
            ++g.female[static_cast<size_t>(preds[i])];
            ++g.n_female;
        } else if (genders[i] == Gender::male) {
            ++g.male[static_cast<size_t>(preds[i])];
            ++g.n_male;
        }
    }
    return g;
}

double rate_gap(const GroupCounts& g, int64_t n_classes) {
    double gap = 0.0;
    for (int64_t c = 0; c < n_classes; ++c) {
        const double pf = static_cast<double>(g.female[static_cast<size_t>(c)]) /
                          static_cast<double>(g.n_female);
        const double pm = static_cast<double>(g.male[static_cast<size_t>(c)]) /
                          static_cast<double>(g.n_male);
        gap += std::abs(pf - pm);
    }
    return 100.0 * gap / static_cast<double>(n_classes);
}

} // namespace

double demographic_parity(const std::vector<int64_t>& preds, const std::vector<Gender>& genders,
                          int64_t n_classes, std::vector<std::string>* warnings) {
    (void)warnings;
    const GroupCounts g = prediction_counts(preds, genders, n_classes);
    if (g.n_female == 0) {
        throw UsageError("demographic_parity: group 'female' is absent");
    }
    if (g.n_male == 0) {
        throw UsageError("demographic_parity: group 'male' is absent");
    }
    return rate_gap(g, n_classes);
}

double equality_of_odds(const std::vector<int64_t>& preds, const std::vector<int64_t>& labels,
                        const std::vector<Gender>& genders, int64_t n_classes,
                        std::vector<std::string>* warnings) {
    if (preds.size() != labels.size() || preds.size() != genders.size()) {
        throw UsageError("equality_of_odds: records have mismatched lengths");
    }
    bool any_female = false, any_male = false;
    for (Gender g : genders) {
        any_female |= g == Gender::female;
        any_male |= g == Gender::male;
    }
    if (!any_female) {
        throw UsageError("equality_of_odds: group 'female' is absent");
    }
    if (!any_male) {
        throw UsageError("equality_of_odds: group 'male' is absent");
    }

    double total = 0.0;
    int64_t counted = 0;
    for (int64_t y = 0; y < n_classes; ++y) {
        std::vector<int64_t> stratum_preds;
        std::vector<Gender> stratum_genders;
        for (size_t i = 0; i < preds.size(); ++i) {
            if (labels[i] == y) {
                stratum_preds.push_back(preds[i]);
                stratum_genders.push_back(genders[i]);
            }
        }
        const GroupCounts g = prediction_counts(stratum_preds, stratum_genders, n_classes);
        if (g.n_female == 0 || g.n_male == 0) {
            if (warnings) {
                warnings->push_back("equality_of_odds: true class " + std::to_string(y) +
                                    " lacks a group and is skipped");
            }
            continue;
        }
        total += rate_gap(g, n_classes);
        ++counted;
    }
    if (counted == 0) {
        throw UsageError("equality_of_odds: no true class has both groups represented");
    }
    return total / static_cast<double>(counted);
}

EvalReport evaluate(const std::vector<PredictionRecord>& records, int64_t n_classes) {
    std::vector<int64_t> preds, labels;
    std::vector<Gender> genders;
    for (const PredictionRecord& r : records) {
        preds.push_back(r.pred);
        labels.push_back(r.label);
        genders.push_back(r.gender);
    }
    EvalReport report;
    report.n_classes = n_classes;
    report.records = records;
    report.confusion = confusion_matrix(preds, labels, n_classes);
    report.uar = uar(report.confusion, n_classes, &report.warnings);
    report.per_fold_uar = {report.uar};
    report.uar_mean = report.uar;
    report.uar_std = 0.0;
    bool any_female = false, any_male = false;
    for (Gender g : genders) {
        any_female |= g == Gender::female;
        any_male |= g == Gender::male;
    }
    if (any_female && any_male) {
        FairnessScores f;
        f.dem_parity = demographic_parity(preds, genders, n_classes, &report.warnings);
        f.eq_odds = equality_of_odds(preds, labels, genders, n_classes, &report.warnings);
        report.fairness = f;
    }
    return report;
}

EvalReport aggregate(const std::vector<EvalReport>& folds) {
    if (folds.empty()) {
        throw UsageError("aggregate: no fold reports");
    }
    EvalReport out;
    out.n_classes = folds.front().n_classes;
    out.confusion.assign(static_cast<size_t>(out.n_classes * out.n_classes), 0);
    double mean = 0.0;
    for (const EvalReport& fold : folds) {
        if (fold.n_classes != out.n_classes ||
            fold.confusion.size() != out.confusion.size()) {
            throw UsageError("aggregate: fold reports disagree on class count");
        }
        for (size_t i = 0; i < out.confusion.size(); ++i) {
            out.confusion[i] += fold.confusion[i];
        }
        out.per_fold_uar.push_back(fold.uar);
        mean += fold.uar;
        out.records.insert(out.records.end(), fold.records.begin(), fold.records.end());
        out.warnings.insert(out.warnings.end(), fold.warnings.begin(), fold.warnings.end());
    }
    mean /= static_cast<double>(folds.size());
    double var = 0.0;
    for (double u : out.per_fold_uar) {
        var += (u - mean) * (u - mean);
    }
    var /= static_cast<double>(folds.size());
    out.uar_mean = mean;
    out.uar_std = std::sqrt(var);
    out.uar = uar(out.confusion, out.n_classes, &out.warnings);

    // fairness: mean over folds that report it, plus pooled over all records
    double dp = 0.0, eo = 0.0;
    int64_t n_fair = 0;
    for (const EvalReport& fold : folds) {
        if (fold.fairness) {
            dp += fold.fairness->dem_parity;
            eo += fold.fairness->eq_odds;
            ++n_fair;
        }
    }
    if (n_fair > 0) {
        out.fairness_fold_mean =
            FairnessScores{dp / static_cast<double>(n_fair), eo / static_cast<double>(n_fair)};
    }
    std::vector<int64_t> preds, labels;
    std::vector<Gender> genders;
    bool any_female = false, any_male = false;
    for (const PredictionRecord& r : out.records) {
        preds.push_back(r.pred);
        labels.push_back(r.label);
        genders.push_back(r.gender);
        any_female |= r.gender == Gender::female;
        any_male |= r.gender == Gender::male;
    }
    if (any_female && any_male) {
        FairnessScores f;
        f.dem_parity = demographic_parity(preds, genders, out.n_classes, &out.warnings);
        f.eq_odds = equality_of_odds(preds, labels, genders, out.n_classes, &out.warnings);
        out.fairness = f;
    }
    return out;
}

} // namespace peftser
