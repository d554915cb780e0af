#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bbecog/common.hpp"
#include "bbecog/tensor.hpp"

namespace bbecog {

// Electrode grid geometry and window layout shared across the toolkit.
inline constexpr std::size_t kGridRows = 8;
inline constexpr std::size_t kGridCols = 16;
inline constexpr std::size_t kChannels = kGridRows * kGridCols;  // 128
inline constexpr std::size_t kSamples = 300;   // per interval, at 1 kHz
inline constexpr std::size_t kClasses = 6;
inline constexpr double kSampleRate = 1000.0;

// One recorded trial: the pre-stimulus background window and the active
// window, both [channels x samples] row-major in microvolts.
struct Trial {
    std::vector<float> background;  // kChannels * kSamples
    std::vector<float> active;      // kChannels * kSamples
    int label = 0;                  // 0..kClasses-1
    std::string subject;
    double sample_rate = kSampleRate;
};

// One planted carrier: a band-limited sinusoid added to a set of electrodes.
// Electrode indices are flat channel numbers (row * kGridCols + col).
struct CarrierSpec {
    std::vector<std::size_t> electrodes;
    double f_lo_hz = 10.0;
    double f_hi_hz = 15.0;
    double amplitude = 1.0;
};

// The carriers that make one class recognizable. A class may carry several
// bands at once (redundant signatures are what the kernel-length experiments
// need to discriminate).
struct ClassSignature {
    std::vector<CarrierSpec> carriers;
};

struct SyntheticConfig {
    std::array<ClassSignature, kClasses> signatures;
    double noise_power = 1.0;    // 1/f spectral power scale
    double white_floor = 0.01;   // flat spectral power floor
    std::size_t trials_per_class = 20;
    std::uint64_t seed = 0;
    std::string subject = "S1";
};

struct Dataset {
    std::vector<Trial> trials;
    std::array<std::string, kClasses> class_names = {
        "building", "body part", "face", "fruit", "insect", "tool"};
    std::string provenance;
    // Generator ground truth (empty when the dataset came from a file).
    std::vector<ClassSignature> ground_truth;
};

// Stratified k-fold assignment over trial indices.
struct FoldSplit {
    std::vector<std::vector<std::size_t>> folds;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct CvPair {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Per-trial normalization: the active window shifted and scaled by the
// *scalar* mean and (population) standard deviation pooled over every
// background channel and sample. Returns [1, kChannels, kSamples].
// A background with standard deviation below 1e-12 is refused.
Tensor normalize_trial(const Trial& trial);

// normalize_trial over a subset of trials, stacked to [B, kChannels,
// kSamples], with the matching labels.
Tensor normalize_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                       std::vector<int>* labels = nullptr);

// Synthesizes a labeled dataset with planted structure: every channel carries
// 1/f + white noise drawn continuously across both windows, and each class
// adds its carriers (random frequency inside the band, random phase, raised-
// cosine amplitude window) to its signature electrodes in the active window
// only. Same config => bitwise-identical dataset.
Dataset generate_synthetic(const SyntheticConfig& cfg);

// Stratified 5-fold split: per class, trial indices are shuffled and dealt
// round-robin, so per-class counts differ by at most one across folds.
// Requires at least k trials of every class.
FoldSplit split_folds(const Dataset& ds, std::size_t k = 5, std::uint64_t seed = 0);

// The k train/test index pairs of a split; test fold j against the rest.
std::vector<CvPair> iterate_cv(const FoldSplit& split);

// Dataset container file: magic "ECOG", version, trial count, geometry, then
// per-trial subject/label/payload. Float payloads round-trip bitwise.
std::string serialize_dataset(const Dataset& ds);
Dataset deserialize_dataset(const std::string& bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// trial_index,label,subject rows for external tooling.
std::string labels_csv(const Dataset& ds);

inline constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace bbecog
