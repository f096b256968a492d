#include "peftser/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "peftser/serialize.hpp"

namespace peftser {

namespace {
const char* kLabelNames[kNumClasses] = {"neutral", "happy", "sad", "angry"};
}

int64_t label_from_name(const std::string& name) {
    for (int64_t i = 0; i < kNumClasses; ++i) {
        if (name == kLabelNames[i]) {
            return i;
        }
    }
    throw DataError("label '" + name + "' is not one of the four retained classes");
}

const char* label_name(int64_t label) {
    if (label < 0 || label >= kNumClasses) {
        throw DataError("label " + std::to_string(label) + " outside [0, 4)");
    }
    return kLabelNames[label];
}

Gender gender_from_name(const std::string& name) {
    if (name == "female") {
        return Gender::female;
    }
    if (name == "male") {
        return Gender::male;
    }
    if (name == "unknown") {
        return Gender::unknown;
    }
    throw DataError("gender '" + name + "' not in {female, male, unknown}");
}

const char* gender_name(Gender g) {
    switch (g) {
    case Gender::female:
        return "female";
    case Gender::male:
        return "male";
    case Gender::unknown:
        return "unknown";
    }
    return "unknown";
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("load_manifest: cannot open " + path.string());
    }
    std::vector<ManifestEntry> entries;
    std::set<std::string> seen_ids;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("load_manifest: " + path.string() + " line " +
                            std::to_string(line_no) + ": " + e.what());
        }
        ManifestEntry entry;
        try {
            entry.id = j.at("id").get<std::string>();
            entry.features_path = j.at("features_path").get<std::string>();
            entry.label = label_from_name(j.at("label").get<std::string>());
            entry.speaker = j.at("speaker").get<std::string>();
            entry.gender = gender_from_name(j.value("gender", "unknown"));
            entry.n_frames = j.at("n_frames").get<int64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError("load_manifest: " + path.string() + " line " +
                            std::to_string(line_no) + ": " + e.what());
        }
        if (!seen_ids.insert(entry.id).second) {
            throw DataError("load_manifest: duplicate id '" + entry.id + "' at line " +
                            std::to_string(line_no));
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("save_manifest: cannot open " + path.string());
    }
    for (const ManifestEntry& e : entries) {
        nlohmann::json j;
        j["id"] = e.id;
        j["features_path"] = e.features_path;
        j["label"] = label_name(e.label);
        j["speaker"] = e.speaker;
        j["gender"] = gender_name(e.gender);
        j["n_frames"] = e.n_frames;
        os << j.dump() << "\n";
    }
}

FeatureSequence load_features(const std::filesystem::path& path, double frame_rate,
                              double max_seconds) {
    Tensor frames = load_tensor(path);
    if (frames.rank() != 2) {
        throw DataError("load_features: " + path.string() + " is not a frame matrix");
    }
    const int64_t cap = static_cast<int64_t>(std::floor(frame_rate * max_seconds));
    FeatureSequence seq;
    seq.frame_rate = frame_rate;
    if (frames.dim(0) > cap) {
        // cap truncates the tail
        std::vector<double> head(frames.data().begin(),
                                 frames.data().begin() + cap * frames.dim(1));
        seq.frames = Tensor({cap, frames.dim(1)}, std::move(head));
    } else {
        seq.frames = frames;
    }
    return seq;
}

void save_features(const std::filesystem::path& path, const Tensor& frames) {
    if (frames.rank() != 2) {
        throw DataError("save_features: frames must be [T x dim]");
    }
    save_tensor(path, frames);
}

FeatureSequence load_entry_features(const ManifestEntry& entry,
                                    const std::filesystem::path& base_dir, double frame_rate,
                                    double max_seconds) {
    const std::filesystem::path path = base_dir / entry.features_path;
    Tensor raw = load_tensor(path);
    if (raw.rank() != 2) {
        throw DataError("features for '" + entry.id + "' are not a frame matrix");
    }
    if (raw.dim(0) != entry.n_frames) {
        throw DataError("entry '" + entry.id + "' declares " + std::to_string(entry.n_frames) +
                        " frames but " + path.string() + " holds " +
                        std::to_string(raw.dim(0)));
    }
    return load_features(path, frame_rate, max_seconds);
}

Tensor add_noise_snr(const Tensor& frames, Rng& rng, double snr_lo_db, double snr_hi_db) {
    const int64_t n = frames.size();
    double power = 0.0;
    for (double v : frames.data()) {
        power += v * v;
    }
    power /= static_cast<double>(n);
    const double snr_db = rng.uniform(snr_lo_db, snr_hi_db);
    if (power == 0.0) {
        return frames;
    }
    const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    Tensor out = frames.clone();
    for (double& v : out.mutable_data()) {
        v += rng.normal(0.0, noise_std);
    }
    return out;
}

Tensor time_mask(const Tensor& frames, Rng& rng, double ratio_lo, double ratio_hi) {
    const int64_t t = frames.dim(0);
    const double ratio = rng.uniform(ratio_lo, ratio_hi);
    const int64_t span = static_cast<int64_t>(std::llround(ratio * static_cast<double>(t)));
    if (span <= 0) {
        return frames;
    }
    const int64_t start = rng.uniform_int(t - span + 1);
    Tensor out = frames.clone();
    auto data = out.mutable_data();
    const int64_t dim = frames.dim(1);
    std::fill(data.begin() + start * dim, data.begin() + (start + span) * dim, 0.0);
    return out;
}

FeatureSequence augment(const FeatureSequence& x, Rng& rng) {
    if (x.frames.dim(0) < 1) {
        throw UsageError("augment: empty sequence");
    }
    double power = 0.0;
    for (double v : x.frames.data()) {
        power += v * v;
    }
    if (power == 0.0) {
        return x;
    }
    FeatureSequence out;
    out.frame_rate = x.frame_rate;
    out.frames = time_mask(add_noise_snr(x.frames, rng), rng);
    return out;
}

std::vector<ManifestEntry> synth_corpus(const SynthConfig& config,
                                        const std::filesystem::path& out_dir) {
    if (config.n_per_class < 1 || config.n_speakers < 1 || config.feature_dim < 1) {
        throw UsageError("synth_corpus: counts must be >= 1");
    }
    std::filesystem::create_directories(out_dir / "features");
    Rng rng(config.seed);

    const int64_t dim = config.feature_dim;
    std::vector<std::vector<double>> class_means(kNumClasses, std::vector<double>(dim));
    for (int64_t c = 0; c < kNumClasses; ++c) {
        for (int64_t j = 0; j < dim; ++j) {
            class_means[c][j] = (j % kNumClasses == c ? 1.5 : 0.0) + rng.uniform(-0.1, 0.1);
        }
    }
    std::vector<std::vector<double>> speaker_offsets(config.n_speakers,
                                                     std::vector<double>(dim));
    for (auto& offset : speaker_offsets) {
        for (double& v : offset) {
            v = rng.normal(0.0, 0.25);
        }
    }

    std::vector<ManifestEntry> entries;
    for (int64_t c = 0; c < kNumClasses; ++c) {
        for (int64_t i = 0; i < config.n_per_class; ++i) {
            const int64_t speaker_ix = (c * config.n_per_class + i) % config.n_speakers;
            const int64_t t = rng.uniform_int(20, 60);
            std::vector<double> frames(static_cast<size_t>(t * dim));
            for (int64_t row = 0; row < t; ++row) {
                for (int64_t j = 0; j < dim; ++j) {
                    frames[static_cast<size_t>(row * dim + j)] =
                        class_means[c][j] + speaker_offsets[speaker_ix][j] +
                        rng.normal(0.0, 0.5);
                }
            }
            char id[64];
            std::snprintf(id, sizeof(id), "utt_%s_%04lld", label_name(c),
                          static_cast<long long>(i));
            ManifestEntry entry;
            entry.id = id;
            entry.features_path = std::string("features/") + id + ".ftr";
            entry.label = c;
            entry.speaker = "spk" + std::to_string(speaker_ix);
            entry.gender = speaker_ix % 2 == 0 ? Gender::female : Gender::male;
            entry.n_frames = t;
            save_features(out_dir / entry.features_path, Tensor({t, dim}, std::move(frames)));
            entries.push_back(std::move(entry));
        }
    }
    save_manifest(out_dir / "manifest.jsonl", entries);
    return entries;
}

SplitScheme split_scheme_from_name(const std::string& name) {
    if (name == "k_fold_speaker_independent") {
        return SplitScheme::k_fold_speaker_independent;
    }
    if (name == "fixed_split") {
        return SplitScheme::fixed_split;
    }
    throw UsageError("unknown split scheme '" + name + "'");
}

const char* split_scheme_name(SplitScheme s) {
    return s == SplitScheme::k_fold_speaker_independent ? "k_fold_speaker_independent"
                                                        : "fixed_split";
}

namespace {

std::vector<std::string> sorted_speakers(const std::vector<ManifestEntry>& entries) {
    std::set<std::string> speakers;
    for (const ManifestEntry& e : entries) {
        speakers.insert(e.speaker);
    }
    return {speakers.begin(), speakers.end()};
}

// Contiguous balanced partition of the sorted speaker list into k groups.
std::vector<std::vector<std::string>> speaker_groups(const std::vector<std::string>& speakers,
                                                     int64_t k) {
    std::vector<std::vector<std::string>> groups(static_cast<size_t>(k));
    const int64_t n = static_cast<int64_t>(speakers.size());
    const int64_t base = n / k, extra = n % k;
    int64_t pos = 0;
    for (int64_t g = 0; g < k; ++g) {
        const int64_t len = base + (g < extra ? 1 : 0);
        for (int64_t i = 0; i < len; ++i) {
            groups[static_cast<size_t>(g)].push_back(speakers[static_cast<size_t>(pos++)]);
        }
    }
    return groups;
}

std::vector<ManifestEntry> entries_for(const std::vector<ManifestEntry>& entries,
                                       const std::set<std::string>& speakers) {
    std::vector<ManifestEntry> out;
    for (const ManifestEntry& e : entries) {
        if (speakers.count(e.speaker)) {
            out.push_back(e);
        }
    }
    return out;
}

} // namespace

std::vector<Fold> split_folds(const std::vector<ManifestEntry>& entries, SplitScheme scheme,
                              int64_t k) {
    const std::vector<std::string> speakers = sorted_speakers(entries);
    const int64_t n = static_cast<int64_t>(speakers.size());
    if (scheme == SplitScheme::fixed_split) {
        if (n < 3) {
            throw UsageError("fixed_split: need at least 3 speakers, have " +
                             std::to_string(n));
        }
        const int64_t held = std::max<int64_t>(1, n / 5);
        std::set<std::string> train(speakers.begin(), speakers.end() - 2 * held);
        std::set<std::string> val(speakers.end() - 2 * held, speakers.end() - held);
        std::set<std::string> test(speakers.end() - held, speakers.end());
        Fold fold{entries_for(entries, train), entries_for(entries, val),
                  entries_for(entries, test)};
        return {fold};
    }

    if (k < 3) {
        throw UsageError("k_fold: k must be >= 3 so that train folds are nonempty");
    }
    if (n < k) {
        throw UsageError("k_fold: " + std::to_string(n) + " speakers but k = " +
                         std::to_string(k));
    }
    const auto groups = speaker_groups(speakers, k);
    std::vector<Fold> folds;
    for (int64_t i = 0; i < k; ++i) {
        const int64_t val_ix = (i + 1) % k;
        std::set<std::string> test(groups[static_cast<size_t>(i)].begin(),
                                   groups[static_cast<size_t>(i)].end());
        std::set<std::string> val(groups[static_cast<size_t>(val_ix)].begin(),
                                  groups[static_cast<size_t>(val_ix)].end());
        std::set<std::string> train;
        for (int64_t g = 0; g < k; ++g) {
            if (g != i && g != val_ix) {
                train.insert(groups[static_cast<size_t>(g)].begin(),
                             groups[static_cast<size_t>(g)].end());
            }
        }
        folds.push_back(Fold{entries_for(entries, train), entries_for(entries, val),
                             entries_for(entries, test)});
    }
    return folds;
}

} // namespace peftser
