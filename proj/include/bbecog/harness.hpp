#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bbecog/data.hpp"
#include "bbecog/model.hpp"

namespace bbecog {

struct TrainConfig {
    std::size_t epochs = 400;
    std::size_t batch_size = 128;
    double lr = 1.5e-6;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;
    // Optional artifacts; empty paths write nothing.
    std::filesystem::path checkpoint_path;
    std::filesystem::path metrics_path;
};

// The defaults above are the full-scale reference recipe; this names it for
// CLI use.
TrainConfig reference_preset();

void validate(const TrainConfig& cfg);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = -1.0;  // -1 when this epoch was not evaluated
    double seconds = 0.0;
};

struct RunMetrics {
    std::vector<EpochRecord> epochs;
    double final_test_accuracy = 0.0;
    // run_cv aggregation; empty/zero for single runs.
    std::vector<double> fold_accuracies;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
};

// Accuracy of the model on [N,channels,T] inputs, evaluated in chunks under
// eval mode with gradients disabled.
double evaluate(Model& m, const Tensor& inputs, const std::vector<int>& labels,
                std::size_t batch_size = 128);

// The raw correct-prediction count behind evaluate(); lets callers that
// process a dataset in slices accumulate accuracy across them.
std::size_t correct_predictions(Model& m, const Tensor& inputs, const std::vector<int>& labels,
                                std::size_t batch_size = 128);

// One training run over pre-normalized tensors. Shuffles per epoch from
// mix(seed, epoch), steps Adam per batch, keeps the last short batch, and
// aborts with TrainDiverged (epoch/batch attached) on a non-finite loss.
// Writes the checkpoint and newline-delimited JSON metrics if paths are set.
RunMetrics train(Model& m, const Tensor& train_x, const std::vector<int>& train_y,
                 const Tensor& test_x, const std::vector<int>& test_y,
                 const TrainConfig& cfg);

// Mean and population standard deviation of fold accuracies.
std::pair<double, double> aggregate_folds(const std::vector<double>& accuracies);

// 5-fold cross-validation: stratified split from cfg.seed, one fresh model
// per fold seeded seed+fold, artifacts named fold<k>.* under out_dir (when
// given). Reports mean +/- population std over fold test accuracies.
RunMetrics run_cv(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  std::size_t k = 5, const std::filesystem::path& out_dir = {});

// Median wall-clock seconds of n_epochs measured training epochs (after one
// unmeasured warm-up epoch) on random data of the given size.
double benchmark_epoch(const ModelConfig& mcfg, std::size_t n_trials,
                       std::size_t batch_size = 128, std::size_t n_epochs = 3);

}  // namespace bbecog
