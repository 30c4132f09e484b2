#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gate/core/tensor.hpp"

namespace gate::store {

struct StoreError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// The file is not there at all.
struct MissingFileError : StoreError {
    using StoreError::StoreError;
};
// The file exists but its bytes are not a well-formed container.
struct CorruptFileError : StoreError {
    using StoreError::StoreError;
};
// Well-formed container written under a different schema version.
struct SchemaMismatchError : StoreError {
    using StoreError::StoreError;
};
// Bundle invariants violated; rejected before any write.
struct InvariantError : StoreError {
    using StoreError::StoreError;
};

// Minimal NPZ container: a stored (uncompressed) ZIP archive whose array
// members are little-endian float32 NPY v1.0 files. Readable with
// numpy.load / any zip tool; text members (e.g. "meta.json") ride alongside.
class NpzWriter {
public:
    void add_array(const std::string& name, const core::Tensor& t);
    void add_text(const std::string& name, const std::string& text);
    // Temp-file + rename; the target is either absent or complete.
    void write_atomic(const std::filesystem::path& path) const;
    std::vector<uint8_t> to_bytes() const;

private:
    struct Entry {
        std::string name;
        std::vector<uint8_t> payload;
    };
    std::vector<Entry> entries_;
};

struct NpzFile {
    std::map<std::string, core::Tensor> arrays;
    std::map<std::string, std::string> texts;

    static NpzFile read(const std::filesystem::path& path);
    static NpzFile from_bytes(const std::vector<uint8_t>& bytes, const std::string& origin);
};

uint32_t crc32(const uint8_t* data, size_t n, uint32_t seed = 0);

}  // namespace gate::store
