#pragma once

#include <string>
#include <vector>

#include "bbecog/common.hpp"
#include "bbecog/tensor.hpp"

namespace bbecog {

// Named float32 array as stored in a checkpoint.
struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

// Binary checkpoint container: "BBEN" magic, format version, then a counted
// sequence of (name, rank, extents, float32 payload) records, little-endian.
std::string serialize_checkpoint(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_checkpoint(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace bbecog
