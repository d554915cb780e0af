#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bbecog/checkpoint.hpp"
#include "bbecog/data.hpp"
#include "bbecog/ops.hpp"

namespace bbecog {

enum class EncoderKind { spatial3d, spatial2d };

// A run of TCNs sharing one temporal kernel length.
struct KernelGroup {
    std::size_t length = 32;
    std::size_t count = 1;
};

struct ModelConfig {
    std::size_t n_tcn = 64;
    // Expanded in listed order; the concatenation axis follows it.
    std::vector<KernelGroup> kernel_lengths = {{32, 32}, {512, 32}};
    EncoderKind encoder = EncoderKind::spatial3d;
    std::size_t grid_rows = kGridRows;
    std::size_t grid_cols = kGridCols;
    std::size_t t_active = kSamples;
    std::size_t n_classes = kClasses;
    std::size_t fusion_kernel = 16;
    std::size_t pool1 = 4;
    std::size_t pool2 = 8;
    bool tcn_bias = true;
};

// Throws ConfigError when the fields are inconsistent (kernel counts not
// summing to n_tcn, grid not matching the channel count, empty pipeline...).
void validate(const ModelConfig& cfg);

// Flat key=value text round-trip. Unknown keys are refused; omitted keys keep
// their defaults; '#' starts a comment line.
std::string serialize_config(const ModelConfig& cfg);
ModelConfig parse_config(const std::string& text);

struct BatchNormStage {
    Tensor gamma, beta;
    Tensor running_mean, running_var;  // not trainable, but checkpointed
};

// All stages of the network. Parameter tensors are created by build_model and
// shared (by node) with optimizers; forward() composes them per the config.
struct Model {
    ModelConfig config;
    std::vector<std::size_t> tcn_lengths;  // per-TCN kernel length, expanded
    std::vector<Tensor> tcn_kernels;
    std::vector<Tensor> tcn_biases;  // undefined tensors when tcn_bias=false
    Tensor enc1_w, enc1_b;
    Tensor enc2_w, enc2_b;  // spatial3d only
    BatchNormStage enc_bn;
    Tensor fus_t_w, fus_t_b;
    Tensor fus_p_w, fus_p_b;
    BatchNormStage fus_bn;
    Tensor fc_w, fc_b;
};

// Deterministic initialization: weights uniform in ±1/sqrt(fan_in) drawn in a
// fixed stage order from Rng(seed); biases and beta zero, gamma one.
Model build_model(const ModelConfig& cfg, std::uint64_t seed);

// batch [B,1,channels,t_active] -> logits [B,n_classes]. Every intermediate
// shape is checked against the chain implied by the config; `trace` (when
// given) receives the named stage shapes in order.
Tensor forward(Model& m, const Tensor& batch, bool training,
               std::vector<std::pair<std::string, Shape>>* trace = nullptr);

// Trainable tensors in a fixed order (the checkpoint order, minus running
// statistics). Shared nodes: optimizer steps mutate the model.
std::vector<Tensor> parameters(Model& m);

std::size_t param_count(const Model& m);

// Snapshot of every persistent array (parameters + running statistics) under
// stable names, and the strict inverse. A checkpoint whose names or shapes do
// not exactly match this model is refused with FormatError.
std::vector<NamedArray> model_arrays(const Model& m);
void load_model_arrays(Model& m, const std::vector<NamedArray>& arrays);

void save_weights(const Model& m, const std::filesystem::path& path);
void load_weights(Model& m, const std::filesystem::path& path);

}  // namespace bbecog
