#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "bbecog/data.hpp"
#include "bbecog/dsp.hpp"
#include "bbecog/model.hpp"

namespace bbecog {

enum class ReportKind { frequency, channel };

struct BandAccuracy {
    double f_lo = 0.0;
    double f_hi = 0.0;
    double accuracy = 0.0;
};

struct ImportanceReport {
    ReportKind kind = ReportKind::frequency;
    std::vector<BandAccuracy> bands;    // frequency reports: one entry per band
    std::vector<double> channel_drops;  // channel reports: 128 entries, row-major
    double baseline_accuracy = 0.0;
    std::string model_id;    // hash of the model's checkpoint bytes
    std::string dataset_id;  // hash of the dataset's container bytes
    std::string timestamp;
    std::vector<std::string> notes;  // method choices recorded with the result
};

struct CrossSubjectMatrix {
    std::vector<std::string> sources;
    std::vector<std::vector<double>> accuracy;  // [trained-on][tested-on]
};

// Band sweep: for every bank entry, both intervals of every selected trial are
// run through the zero-phase band filter, the trial is renormalized against
// its filtered background, and the model is scored on the result. Bands are
// reported in bank order. Empty `indices` means all trials; an empty dataset
// is refused. The model and dataset are never modified.
ImportanceReport frequency_importance(Model& m, const Dataset& ds,
                                      const std::vector<std::size_t>& indices,
                                      const std::vector<FilterSpec>& bank,
                                      std::size_t batch_size = 128);

// Channel ablation: baseline accuracy once, then each of the 128 channels is
// zeroed across all selected trials (after normalization, so zero sits at the
// background-mean level) and the drop d_i = baseline - ablated is recorded,
// laid out row-major on the 8x16 grid (channel = 16*row + col).
ImportanceReport channel_importance(Model& m, const Dataset& ds,
                                    const std::vector<std::size_t>& indices,
                                    std::size_t batch_size = 128);

// Every model scored on every source's held-out test tensors. Requires at
// least two sources and equal channel counts; entry [i][j] is model i's
// accuracy on source j, so diagonal entries are the within-source scores.
CrossSubjectMatrix cross_subject_eval(std::vector<Model>& models,
                                      const std::vector<Tensor>& test_inputs,
                                      const std::vector<std::vector<int>>& test_labels,
                                      const std::vector<std::string>& sources,
                                      std::size_t batch_size = 128);

enum class HeatmapFormat { csv, pgm };

// Renders a channel report's 8x16 drop grid: CSV with one row per electrode
// row, or a P2 grayscale image min-max scaled so darker pixels mark larger
// drops (a constant grid renders mid-gray).
void export_heatmap(const ImportanceReport& report, const std::filesystem::path& path,
                    HeatmapFormat format);

// The report as a structured JSON document (kind, parameters, values,
// baseline, provenance hashes, notes).
std::string report_json(const ImportanceReport& report);

std::string cross_subject_csv(const CrossSubjectMatrix& matrix);

}  // namespace bbecog
