#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "peftser/rng.hpp"
#include "peftser/tensor.hpp"

namespace peftser {

inline constexpr int64_t kNumClasses = 4;

// Retained emotion classes, in label order.
int64_t label_from_name(const std::string& name); // neutral=0 happy=1 sad=2 angry=3
const char* label_name(int64_t label);

enum class Gender { female, male, unknown };
Gender gender_from_name(const std::string& name);
const char* gender_name(Gender g);

struct ManifestEntry {
    std::string id;
    std::string features_path; // relative to the manifest directory
    int64_t label = 0;
    std::string speaker;
    Gender gender = Gender::unknown;
    int64_t n_frames = 0;
};

// JSON-lines manifest; duplicate ids and unknown labels are rejected.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct FeatureSequence {
    Tensor frames; // [T x feature_dim]
    double frame_rate = 10.0;
};

// Reads a feature file and enforces the 6-second cap by truncating the tail.
FeatureSequence load_features(const std::filesystem::path& path, double frame_rate = 10.0,
                              double max_seconds = 6.0);
void save_features(const std::filesystem::path& path, const Tensor& frames);

// Resolves the entry's path against `base_dir` and checks n_frames against
// the file header before the cap is applied.
FeatureSequence load_entry_features(const ManifestEntry& entry,
                                    const std::filesystem::path& base_dir,
                                    double frame_rate = 10.0, double max_seconds = 6.0);

// Training-time augmentation: Gaussian noise at an SNR drawn from [10, 30] dB
// (relative to the mean square over all cells), then one contiguous time mask
// covering a ratio drawn from [0.10, 0.15] of the frames. A zero-power input
// is returned unchanged.
FeatureSequence augment(const FeatureSequence& x, Rng& rng);
Tensor add_noise_snr(const Tensor& frames, Rng& rng, double snr_lo_db = 10.0,
                     double snr_hi_db = 30.0);
Tensor time_mask(const Tensor& frames, Rng& rng, double ratio_lo = 0.10,
                 double ratio_hi = 0.15);

struct SynthConfig {
    int64_t n_per_class = 50;
    int64_t n_speakers = 10;
    uint64_t seed = 0;
    int64_t feature_dim = 8;
};

// Class-separable synthetic corpus: frames around a class mean plus a speaker
// offset plus noise, lengths 20-60, balanced labels, genders alternating per
// speaker. Writes manifest.jsonl and features/ under out_dir.
std::vector<ManifestEntry> synth_corpus(const SynthConfig& config,
                                        const std::filesystem::path& out_dir);

struct Fold {
    std::vector<ManifestEntry> train, val, test;
};

enum class SplitScheme { k_fold_speaker_independent, fixed_split };
SplitScheme split_scheme_from_name(const std::string& name);
const char* split_scheme_name(SplitScheme s);

// Speaker-independent folds: speakers are partitioned into k groups; fold i
// tests group i while group i+1 (mod k) validates. fixed_split makes a single
// 60/20/20 speaker split.
std::vector<Fold> split_folds(const std::vector<ManifestEntry>& entries, SplitScheme scheme,
                              int64_t k = 5);

} // namespace peftser
