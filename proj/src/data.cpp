#include "bbecog/data.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "bbecog/dsp.hpp"
#include "bbecog/rng.hpp"

namespace bbecog {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kWindow = kChannels * kSamples;
// Noise is synthesized on a longer periodic grid and cropped, so the two
// 300-sample windows are one continuous draw.
constexpr std::size_t kNoiseFft = 1024;

struct TrialStats {
    double mean, stddev;
};

TrialStats background_stats(const Trial& trial) {
    if (trial.background.size() != kWindow || trial.active.size() != kWindow) {
        throw ShapeError("trial windows must be " + std::to_string(kChannels) + "x" +
                         std::to_string(kSamples));
    }
    double sum = 0.0;
    for (float v : trial.background) sum += v;
    const double mean = sum / static_cast<double>(kWindow);
    double sq = 0.0;
    for (float v : trial.background) {
        const double d = v - mean;
        sq += d * d;
    }
    const double stddev = std::sqrt(sq / static_cast<double>(kWindow));
    if (stddev < 1e-12) {
        throw ConfigError("degenerate background: standard deviation " +
                          std::to_string(stddev) + " is below 1e-12");
    }
    return {mean, stddev};
}

void validate_config(const SyntheticConfig& cfg) {
    if (cfg.trials_per_class == 0) throw ConfigError("trials_per_class must be positive");
    for (std::size_t c = 0; c < kClasses; ++c) {
        const ClassSignature& sig = cfg.signatures[c];
        if (sig.carriers.empty()) {
            throw ConfigError("class " + std::to_string(c) + " has an empty signature");
        }
        for (const CarrierSpec& car : sig.carriers) {
            if (car.electrodes.empty()) {
                throw ConfigError("class " + std::to_string(c) +
                                  " has a carrier with no electrodes");
            }
            for (std::size_t e : car.electrodes) {
                if (e >= kChannels) {
                    throw ConfigError("electrode index " + std::to_string(e) +
                                      " outside the " + std::to_string(kChannels) +
                                      "-channel grid");
                }
            }
            if (!(car.f_lo_hz > 0.0) || !(car.f_hi_hz > car.f_lo_hz) ||
                car.f_hi_hz >= kSampleRate / 2.0) {
                throw ConfigError("carrier band must satisfy 0 < f_lo < f_hi < Nyquist");
            }
            if (car.amplitude < 0.0) throw ConfigError("carrier amplitude must be >= 0");
        }
    }
    if (cfg.noise_power < 0.0 || cfg.white_floor < 0.0) {
        throw ConfigError("noise powers must be >= 0");
    }
}

}  // namespace

Tensor normalize_trial(const Trial& trial) {
    const TrialStats st = background_stats(trial);
    Tensor out = Tensor::zeros({1, kChannels, kSamples});
    float* o = out.data();
    const double inv = 1.0 / st.stddev;
    for (std::size_t i = 0; i < kWindow; ++i) {
        o[i] = static_cast<float>((trial.active[i] - st.mean) * inv);
    }
    return out;
}

Tensor normalize_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                       std::vector<int>* labels) {
    Tensor out = Tensor::zeros({indices.size(), kChannels, kSamples});
    if (labels) labels->clear();
    float* o = out.data();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const std::size_t i = indices[b];
        if (i >= ds.trials.size()) {
            throw std::out_of_range("trial index " + std::to_string(i) + " out of range");
        }
        const Trial& trial = ds.trials[i];
        const TrialStats st = background_stats(trial);
        const double inv = 1.0 / st.stddev;
        float* dst = o + b * kWindow;
        for (std::size_t j = 0; j < kWindow; ++j) {
            dst[j] = static_cast<float>((trial.active[j] - st.mean) * inv);
        }
        if (labels) labels->push_back(trial.label);
    }
    return out;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    validate_config(cfg);
    Dataset ds;
    ds.ground_truth.assign(cfg.signatures.begin(), cfg.signatures.end());
    {
        std::ostringstream os;
        os << "synthetic seed=" << cfg.seed << " trials_per_class=" << cfg.trials_per_class
           << " noise_power=" << cfg.noise_power << " white_floor=" << cfg.white_floor
           << " subject=" << cfg.subject;
        ds.provenance = os.str();
    }
    Rng rng(cfg.seed);

    // Per-bin amplitude of the noise spectrum: power noise_power/f + floor.
    std::vector<double> bin_sd(kNoiseFft / 2 + 1, 0.0);
    for (std::size_t k = 1; k <= kNoiseFft / 2; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kNoiseFft;
        bin_sd[k] = std::sqrt(cfg.noise_power / f + cfg.white_floor);
    }

    std::vector<std::complex<double>> spec(kNoiseFft);
    ds.trials.reserve(kClasses * cfg.trials_per_class);
    for (std::size_t cls = 0; cls < kClasses; ++cls) {
        for (std::size_t rep = 0; rep < cfg.trials_per_class; ++rep) {
            Trial trial;
            trial.background.resize(kWindow);
            trial.active.resize(kWindow);
            trial.label = static_cast<int>(cls);
            trial.subject = cfg.subject;
            trial.sample_rate = kSampleRate;

            for (std::size_t ch = 0; ch < kChannels; ++ch) {
                spec[0] = 0.0;  // zero-mean noise
                for (std::size_t k = 1; k < kNoiseFft / 2; ++k) {
                    spec[k] = {bin_sd[k] * rng.normal(), bin_sd[k] * rng.normal()};
                    spec[kNoiseFft - k] = std::conj(spec[k]);
                }
                spec[kNoiseFft / 2] = bin_sd[kNoiseFft / 2] * rng.normal();
                fft_radix2(spec, true);
                // Undo the 1/N of the inverse transform: x[n] is the plain
                // sum over bins, so E[x^2] = sum of bin powers.
                for (std::size_t t = 0; t < kSamples; ++t) {
                    trial.background[ch * kSamples + t] =
                        static_cast<float>(spec[t].real() * kNoiseFft);
                    trial.active[ch * kSamples + t] =
                        static_cast<float>(spec[kSamples + t].real() * kNoiseFft);
                }
            }

            for (const CarrierSpec& car : cfg.signatures[cls].carriers) {
                const double f = rng.uniform(car.f_lo_hz, car.f_hi_hz);
                const double phase = rng.uniform(0.0, kTwoPi);
                for (std::size_t e : car.electrodes) {
                    float* row = trial.active.data() + e * kSamples;
                    for (std::size_t t = 0; t < kSamples; ++t) {
                        // Raised-cosine envelope: the carrier fades in and out
                        // inside the active window instead of switching hard.
                        const double w =
                            0.5 * (1.0 - std::cos(kTwoPi * t / (kSamples - 1.0)));
                        row[t] += static_cast<float>(
                            car.amplitude * w *
                            std::sin(kTwoPi * f * t / kSampleRate + phase));
                    }
                }
            }
            ds.trials.push_back(std::move(trial));
        }
    }
    return ds;
}

FoldSplit split_folds(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("split_folds: need k >= 2");
    std::array<std::vector<std::size_t>, kClasses> per_class;
    for (std::size_t i = 0; i < ds.trials.size(); ++i) {
        const int label = ds.trials[i].label;
        if (label < 0 || static_cast<std::size_t>(label) >= kClasses) {
            throw ConfigError("trial " + std::to_string(i) + " has label " +
                              std::to_string(label));
        }
        per_class[static_cast<std::size_t>(label)].push_back(i);
    }
    for (std::size_t c = 0; c < kClasses; ++c) {
        if (per_class[c].size() < k) {
            throw ConfigError("class " + std::to_string(c) + " has " +
                              std::to_string(per_class[c].size()) + " trials; need >= " +
                              std::to_string(k) + " for stratified folds");
        }
    }
    FoldSplit split;
    split.seed = seed;
    split.folds.assign(k, {});
    for (std::size_t c = 0; c < kClasses; ++c) {
        Rng rng(Rng::mix(seed, c));
        rng.shuffle(per_class[c]);
        // Rotate the dealing start per class so remainder trials spread over
        // different folds instead of piling into fold 0.
        for (std::size_t j = 0; j < per_class[c].size(); ++j) {
            split.folds[(c + j) % k].push_back(per_class[c][j]);
        }
    }
    for (auto& fold : split.folds) std::sort(fold.begin(), fold.end());
    return split;
}

std::vector<CvPair> iterate_cv(const FoldSplit& split) {
    std::vector<CvPair> out;
    out.reserve(split.folds.size());
    for (std::size_t j = 0; j < split.folds.size(); ++j) {
        CvPair pair;
        pair.test = split.folds[j];
        for (std::size_t o = 0; o < split.folds.size(); ++o) {
            if (o == j) continue;
            pair.train.insert(pair.train.end(), split.folds[o].begin(), split.folds[o].end());
        }
        std::sort(pair.train.begin(), pair.train.end());
        out.push_back(std::move(pair));
    }
    return out;
}

std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    out += "ECOG";
    write_u32(out, kDatasetVersion);
    write_u32(out, static_cast<std::uint32_t>(ds.trials.size()));
    write_u16(out, static_cast<std::uint16_t>(kChannels));
    write_u16(out, static_cast<std::uint16_t>(kSamples));
    write_u16(out, static_cast<std::uint16_t>(kSamples));
    for (const Trial& trial : ds.trials) {
        if (trial.background.size() != kWindow || trial.active.size() != kWindow) {
            throw ShapeError("serialize_dataset: trial windows must be " +
                             std::to_string(kChannels) + "x" + std::to_string(kSamples));
        }
        if (trial.label < 0 || static_cast<std::size_t>(trial.label) >= kClasses) {
            throw ConfigError("serialize_dataset: label " + std::to_string(trial.label) +
                              " out of range");
        }
        write_u16(out, static_cast<std::uint16_t>(trial.subject.size()));
        out += trial.subject;
        write_u8(out, static_cast<std::uint8_t>(trial.label));
        write_f32_block(out, trial.background.data(), kWindow);
        write_f32_block(out, trial.active.data(), kWindow);
    }
    return out;
}

Dataset deserialize_dataset(const std::string& bytes) {
    ByteReader r(bytes, "dataset");
    if (r.str(4) != "ECOG") throw FormatError("dataset: bad magic");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion) {
        throw FormatError("dataset: unsupported version " + std::to_string(version));
    }
    const std::uint32_t n_trials = r.u32();
    const std::uint16_t channels = r.u16();
    const std::uint16_t t_bg = r.u16();
    const std::uint16_t t_ac = r.u16();
    if (channels != kChannels || t_bg != kSamples || t_ac != kSamples) {
        throw FormatError("dataset: unsupported geometry " + std::to_string(channels) + "x" +
                          std::to_string(t_bg) + "/" + std::to_string(t_ac));
    }
    Dataset ds;
    ds.trials.resize(n_trials);
    for (std::uint32_t i = 0; i < n_trials; ++i) {
        Trial& trial = ds.trials[i];
        const std::uint16_t tag_len = r.u16();
        trial.subject = r.str(tag_len);
        trial.label = r.u8();
        if (static_cast<std::size_t>(trial.label) >= kClasses) {
            throw FormatError("dataset: trial " + std::to_string(i) + " label " +
                              std::to_string(trial.label) + " out of range");
        }
        trial.background.resize(kWindow);
        trial.active.resize(kWindow);
        r.f32_block(trial.background.data(), kWindow);
        r.f32_block(trial.active.data(), kWindow);
        trial.sample_rate = kSampleRate;
    }
    if (!r.at_end()) throw FormatError("dataset: trailing bytes");
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path) {
    Dataset ds = deserialize_dataset(read_file(path));
    ds.provenance = "file: " + path.string();
    return ds;
}

std::string labels_csv(const Dataset& ds) {
    std::ostringstream os;
    os << "trial_index,label,subject\n";
    for (std::size_t i = 0; i < ds.trials.size(); ++i) {
        os << i << "," << ds.trials[i].label << "," << ds.trials[i].subject << "\n";
    }
    return os.str();
}

}  // namespace bbecog
