#include "bbecog/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

#include "bbecog/checkpoint.hpp"
#include "bbecog/common.hpp"
#include "bbecog/harness.hpp"
#include "json.hpp"

namespace bbecog {

namespace {

// Trials per slice: bounds the resident forward-spectra cache (a few MB per
// trial) while keeping evaluation batches reasonably full.
constexpr std::size_t kSliceTrials = 16;

std::vector<std::size_t> resolve_indices(const Dataset& ds,
                                         const std::vector<std::size_t>& indices,
                                         const char* what) {
    if (ds.trials.empty()) {
        throw std::invalid_argument(std::string(what) + ": empty dataset");
    }
    std::vector<std::size_t> idx = indices;
    if (idx.empty()) {
        idx.resize(ds.trials.size());
        std::iota(idx.begin(), idx.end(), 0);
    }
    for (std::size_t i : idx) {
        if (i >= ds.trials.size()) {
            throw std::invalid_argument(std::string(what) + ": trial index " +
                                        std::to_string(i) + " out of range");
        }
    }
    return idx;
}

std::string model_hash(const Model& m) {
    return fnv1a64_hex(serialize_checkpoint(model_arrays(m)));
}

std::string dataset_hash(const Dataset& ds) { return fnv1a64_hex(serialize_dataset(ds)); }

std::vector<int> labels_of(const Dataset& ds, const std::vector<std::size_t>& idx) {
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = ds.trials[idx[i]].label;
    return labels;
}

}  // namespace

ImportanceReport frequency_importance(Model& m, const Dataset& ds,
                                      const std::vector<std::size_t>& indices,
                                      const std::vector<FilterSpec>& bank,
                                      std::size_t batch_size) {
    const std::vector<std::size_t> idx = resolve_indices(ds, indices, "frequency_importance");
    if (bank.empty()) throw std::invalid_argument("frequency_importance: empty filter bank");
    if (batch_size == 0) {
        throw std::invalid_argument("frequency_importance: batch_size must be positive");
    }

    ImportanceReport report;
    report.kind = ReportKind::frequency;
    report.model_id = model_hash(m);
    report.dataset_id = dataset_hash(ds);
    report.timestamp = utc_timestamp();
    report.notes = {
        "both intervals are band-filtered, then the trial is renormalized against its "
        "filtered background",
        "accuracies are scored on the supplied held-out trials, not on training trials",
    };

    std::vector<int> all_labels;
    Tensor baseline_x = normalize_batch(ds, idx, &all_labels);
    report.baseline_accuracy = evaluate(m, baseline_x, all_labels, batch_size);

    std::vector<ZeroPhaseFilter> filters;
    filters.reserve(bank.size());
    for (const FilterSpec& spec : bank) filters.emplace_back(design_bandpass(spec));

    // Distinct reflection reaches in the bank; the default bank has one, so
    // every band reuses the same per-trial forward transforms.
    std::vector<std::size_t> pads;
    for (const auto& f : filters) {
        if (std::find(pads.begin(), pads.end(), f.pad()) == pads.end()) pads.push_back(f.pad());
    }

    const std::size_t n_trials = idx.size();
    std::vector<std::size_t> correct(bank.size(), 0);
    std::vector<float> filtered_bg(kChannels * kSamples), filtered_act(kChannels * kSamples);
    for (std::size_t start = 0; start < n_trials; start += kSliceTrials) {
        const std::size_t n = std::min(kSliceTrials, n_trials - start);

        // Forward transforms of both intervals of every trial in the slice.
        std::vector<std::map<std::size_t, std::pair<RowSpectra, RowSpectra>>> spectra(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Trial& trial = ds.trials[idx[start + i]];
            for (std::size_t pad : pads) {
                spectra[i][pad] = {
                    precompute_row_spectra(trial.background.data(), kChannels, kSamples, pad),
                    precompute_row_spectra(trial.active.data(), kChannels, kSamples, pad)};
            }
        }

        std::vector<int> slice_labels(n);
        for (std::size_t i = 0; i < n; ++i) slice_labels[i] = ds.trials[idx[start + i]].label;

        for (std::size_t b = 0; b < bank.size(); ++b) {
            std::vector<float> slice_values(n * kChannels * kSamples);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& pair = spectra[i].at(filters[b].pad());
                filters[b].apply_spectra(pair.first, filtered_bg.data());
                filters[b].apply_spectra(pair.second, filtered_act.data());
                Trial tmp = ds.trials[idx[start + i]];
                tmp.background = filtered_bg;
                tmp.active = filtered_act;
                Tensor row = normalize_trial(tmp);
                std::copy(row.data(), row.data() + row.numel(),
                          slice_values.data() + i * kChannels * kSamples);
            }
            Tensor slice_x =
                Tensor::from_data({n, kChannels, kSamples}, std::move(slice_values));
            correct[b] += correct_predictions(m, slice_x, slice_labels, batch_size);
        }
    }

    report.bands.reserve(bank.size());
    for (std::size_t b = 0; b < bank.size(); ++b) {
        report.bands.push_back({bank[b].f_lo, bank[b].f_hi,
                                static_cast<double>(correct[b]) /
                                    static_cast<double>(n_trials)});
    }
    return report;
}

ImportanceReport channel_importance(Model& m, const Dataset& ds,
                                    const std::vector<std::size_t>& indices,
                                    std::size_t batch_size) {
    const std::vector<std::size_t> idx = resolve_indices(ds, indices, "channel_importance");
    if (batch_size == 0) {
        throw std::invalid_argument("channel_importance: batch_size must be positive");
    }

    ImportanceReport report;
    report.kind = ReportKind::channel;
    report.model_id = model_hash(m);
    report.dataset_id = dataset_hash(ds);
    report.timestamp = utc_timestamp();
    report.notes = {
        "channels are zeroed after normalization, so zero sits at the background-mean level",
        "accuracies are scored on the supplied held-out trials, not on training trials",
    };

    std::vector<int> labels;
    Tensor baseline_x = normalize_batch(ds, idx, &labels);
    report.baseline_accuracy = evaluate(m, baseline_x, labels, batch_size);

    const std::size_t N = idx.size();
    const std::vector<float> base_values = baseline_x.values();
    report.channel_drops.resize(kChannels);
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
        std::vector<float> ablated = base_values;
        for (std::size_t i = 0; i < N; ++i) {
            float* row = ablated.data() + (i * kChannels + ch) * kSamples;
            std::fill(row, row + kSamples, 0.0f);
        }
        Tensor x = Tensor::from_data({N, kChannels, kSamples}, std::move(ablated));
        const double acc = evaluate(m, x, labels, batch_size);
        report.channel_drops[ch] = report.baseline_accuracy - acc;
    }
    return report;
}

CrossSubjectMatrix cross_subject_eval(std::vector<Model>& models,
                                      const std::vector<Tensor>& test_inputs,
                                      const std::vector<std::vector<int>>& test_labels,
                                      const std::vector<std::string>& sources,
                                      std::size_t batch_size) {
    const std::size_t n = models.size();
    if (n < 2) throw std::invalid_argument("cross_subject_eval: need at least two sources");
    if (test_inputs.size() != n || test_labels.size() != n || sources.size() != n) {
        throw std::invalid_argument(
            "cross_subject_eval: models, test sets, and source names must align");
    }
    for (const Tensor& x : test_inputs) {
        if (!x.defined() || x.rank() != 3) {
            throw ShapeError("cross_subject_eval: test tensors must be rank-3 [N,channels,T]");
        }
        if (x.extent(1) != test_inputs[0].extent(1)) {
            throw ShapeError("cross_subject_eval: sources disagree on channel count (" +
                             std::to_string(x.extent(1)) + " vs " +
                             std::to_string(test_inputs[0].extent(1)) + ")");
        }
    }

    CrossSubjectMatrix matrix;
    matrix.sources = sources;
    matrix.accuracy.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            matrix.accuracy[i][j] = evaluate(models[i], test_inputs[j], test_labels[j],
                                             batch_size);
        }
    }
    return matrix;
}

void export_heatmap(const ImportanceReport& report, const std::filesystem::path& path,
                    HeatmapFormat format) {
    if (report.kind != ReportKind::channel ||
        report.channel_drops.size() != kGridRows * kGridCols) {
        throw ConfigError("export_heatmap: needs a channel report with a full 8x16 grid");
    }
    std::ostringstream os;
    if (format == HeatmapFormat::csv) {
        os.precision(17);
        for (std::size_t r = 0; r < kGridRows; ++r) {
            for (std::size_t c = 0; c < kGridCols; ++c) {
                if (c != 0) os << ',';
                os << report.channel_drops[r * kGridCols + c];
            }
            os << '\n';
        }
    } else {
        const auto [lo_it, hi_it] =
            std::minmax_element(report.channel_drops.begin(), report.channel_drops.end());
        const double lo = *lo_it, hi = *hi_it;
        os << "P2\n" << kGridCols << ' ' << kGridRows << "\n255\n";
        for (std::size_t r = 0; r < kGridRows; ++r) {
            for (std::size_t c = 0; c < kGridCols; ++c) {
                int level = 128;  // a flat grid renders uniform mid-gray
                if (hi > lo) {
                    const double d = report.channel_drops[r * kGridCols + c];
                    // Min-max scaled with darker = larger drop.
                    level = static_cast<int>(std::lround(255.0 * (hi - d) / (hi - lo)));
                }
                if (c != 0) os << ' ';
                os << level;
            }
            os << '\n';
        }
    }
    write_file_atomic(path, os.str());
}

std::string report_json(const ImportanceReport& report) {
    nlohmann::json j;
    j["kind"] = report.kind == ReportKind::frequency ? "frequency" : "channel";
    j["baseline_accuracy"] = report.baseline_accuracy;
    j["model_id"] = report.model_id;
    j["dataset_id"] = report.dataset_id;
    j["timestamp"] = report.timestamp;
    j["notes"] = report.notes;
    if (report.kind == ReportKind::frequency) {
        j["parameters"] = {{"n_bands", report.bands.size()}};
        nlohmann::json values = nlohmann::json::array();
        for (const BandAccuracy& band : report.bands) {
            values.push_back(
                {{"f_lo_hz", band.f_lo}, {"f_hi_hz", band.f_hi}, {"accuracy", band.accuracy}});
        }
        j["values"] = values;
    } else {
        j["parameters"] = {{"grid_rows", kGridRows}, {"grid_cols", kGridCols}};
        nlohmann::json grid = nlohmann::json::array();
        for (std::size_t r = 0; r < kGridRows; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < kGridCols; ++c) {
                row.push_back(report.channel_drops[r * kGridCols + c]);
            }
            grid.push_back(row);
        }
        j["values"] = grid;
    }
    return j.dump(2) + "\n";
}

std::string cross_subject_csv(const CrossSubjectMatrix& matrix) {
    std::ostringstream os;
    os.precision(17);
    os << "train\\test";
    for (const std::string& s : matrix.sources) os << ',' << s;
    os << '\n';
    for (std::size_t i = 0; i < matrix.sources.size(); ++i) {
        os << matrix.sources[i];
        for (double a : matrix.accuracy[i]) os << ',' << a;
        os << '\n';
    }
    return os.str();
}

}  // namespace bbecog
