#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace bbecog {

// Shape/dimension mismatch between tensors or between a tensor and an op's contract.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration value (model, synthetic generator, train setup).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// On-disk format violation: bad magic, truncation, version mismatch.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a training run produces a non-finite loss.
struct TrainDiverged : std::runtime_error {
    int epoch = -1;
    int batch = -1;
    TrainDiverged(const std::string& msg, int epoch_, int batch_)
        : std::runtime_error(msg), epoch(epoch_), batch(batch_) {}
};

// ---------------------------------------------------------------------------
// Little-endian binary helpers. All file formats in this project are
// little-endian regardless of host order.
// ---------------------------------------------------------------------------

void write_u8(std::string& out, std::uint8_t v);
void write_u16(std::string& out, std::uint16_t v);
void write_u32(std::string& out, std::uint32_t v);
void write_u64(std::string& out, std::uint64_t v);
void write_f32(std::string& out, float v);
void write_f32_block(std::string& out, const float* data, std::size_t count);

// Cursor over an in-memory file image; throws FormatError on truncation.
class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string context)
        : bytes_(bytes), context_(std::move(context)) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    void f32_block(float* dst, std::size_t count);
    std::string str(std::size_t len);
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n);
    const std::string& bytes_;
    std::string context_;
    std::size_t pos_ = 0;
};

// Whole-file read/write. write_file_atomic writes to a temp file in the same
// directory and renames into place.
std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

// FNV-1a 64-bit over raw bytes, rendered as 16 hex chars. Used for
// provenance fingerprints in reports and manifests.
std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);
std::string file_hash_hex(const std::filesystem::path& path);

// UTC timestamp "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

}  // namespace bbecog
