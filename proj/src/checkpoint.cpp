#include "bbecog/checkpoint.hpp"

namespace bbecog {

std::string serialize_checkpoint(const std::vector<NamedArray>& arrays) {
    std::string out;
    out += "BBEN";
    write_u32(out, kCheckpointVersion);
    write_u32(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        write_u32(out, static_cast<std::uint32_t>(a.name.size()));
        out += a.name;
        write_u32(out, static_cast<std::uint32_t>(a.shape.size()));
        for (std::size_t e : a.shape) write_u64(out, e);
        if (a.values.size() != shape_numel(a.shape)) {
            throw FormatError("checkpoint: array '" + a.name + "' has " +
                              std::to_string(a.values.size()) + " values but shape " +
                              shape_str(a.shape));
        }
        write_f32_block(out, a.values.data(), a.values.size());
    }
    return out;
}

std::vector<NamedArray> deserialize_checkpoint(const std::string& bytes) {
    ByteReader r(bytes, "checkpoint");
    if (bytes.size() < 4 || bytes.compare(0, 4, "BBEN") != 0) {
        throw FormatError("checkpoint: bad magic (expected BBEN)");
    }
    r.skip(4);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    std::vector<NamedArray> arrays;
    arrays.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        const std::uint32_t name_len = r.u32();
        a.name = r.str(name_len);
        const std::uint32_t rank = r.u32();
        a.shape.resize(rank);
        for (std::uint32_t d = 0; d < rank; ++d) a.shape[d] = r.u64();
        const std::size_t n = shape_numel(a.shape);
        a.values.resize(n);
        r.f32_block(a.values.data(), n);
        arrays.push_back(std::move(a));
    }
    if (!r.at_end()) {
        throw FormatError("checkpoint: " + std::to_string(r.remaining()) +
                          " trailing bytes after last array");
    }
    return arrays;
}

void save_checkpoint(const std::string& path, const std::vector<NamedArray>& arrays) {
    write_file_atomic(path, serialize_checkpoint(arrays));
}

std::vector<NamedArray> load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file(path));
}

}  // namespace bbecog
