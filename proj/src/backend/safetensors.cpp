#include "gate/backend/safetensors.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gate::backend {

namespace fs = std::filesystem;
using core::Tensor;
using nlohmann::json;

namespace {

float half_to_float(uint16_t h) {
    const uint32_t sign = static_cast<uint32_t>(h >> 15) & 1u;
    const uint32_t exp = static_cast<uint32_t>(h >> 10) & 0x1fu;
    const uint32_t frac = static_cast<uint32_t>(h) & 0x3ffu;
    uint32_t bits;
    if (exp == 0) {
        if (frac == 0) {
            bits = sign << 31;
        } else {
            // subnormal: normalize
            int e = -1;
            uint32_t f = frac;
            while ((f & 0x400u) == 0) {
                f <<= 1;
                ++e;
            }
            bits = (sign << 31) | static_cast<uint32_t>((127 - 15 - e) << 23) | ((f & 0x3ffu) << 13);
        }
    } else if (exp == 0x1f) {
        bits = (sign << 31) | 0x7f800000u | (frac << 13);
    } else {
        bits = (sign << 31) | ((exp - 15 + 127) << 23) | (frac << 13);
    }
    float out;
    std::memcpy(&out, &bits, 4);
    return out;
}

float bf16_to_float(uint16_t h) {
    const uint32_t bits = static_cast<uint32_t>(h) << 16;
    float out;
    std::memcpy(&out, &bits, 4);
    return out;
}

}  // namespace

std::map<std::string, Tensor> load_safetensors(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open safetensors file: " + path.string());
    uint64_t header_len = 0;
    f.read(reinterpret_cast<char*>(&header_len), 8);
    if (!f || header_len == 0 || header_len > (1ull << 31)) {
        throw std::runtime_error("bad safetensors header length: " + path.string());
    }
    std::string header(header_len, '\0');
    f.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!f) throw std::runtime_error("truncated safetensors header: " + path.string());
    json j;
    try {
        j = json::parse(header);
    } catch (const json::exception& e) {
        throw std::runtime_error("bad safetensors json in " + path.string() + ": " + e.what());
    }
    std::vector<uint8_t> buffer((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    std::map<std::string, Tensor> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "__metadata__") continue;
        const json& e = it.value();
        const std::string dtype = e.at("dtype").get<std::string>();
        std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
        const uint64_t begin = e.at("data_offsets")[0].get<uint64_t>();
        const uint64_t end = e.at("data_offsets")[1].get<uint64_t>();
        if (end > buffer.size() || begin > end) {
            throw std::runtime_error("tensor '" + it.key() + "' offsets out of range in " + path.string());
        }
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        std::vector<float> data(static_cast<size_t>(n));
        const uint8_t* src = buffer.data() + begin;
        const uint64_t nbytes = end - begin;
        if (dtype == "F32") {
            if (nbytes != static_cast<uint64_t>(n) * 4) {
                throw std::runtime_error("F32 size mismatch for '" + it.key() + "'");
            }
            std::memcpy(data.data(), src, nbytes);
        } else if (dtype == "F16" || dtype == "BF16") {
            if (nbytes != static_cast<uint64_t>(n) * 2) {
                throw std::runtime_error(dtype + " size mismatch for '" + it.key() + "'");
            }
            for (int64_t i = 0; i < n; ++i) {
                uint16_t h;
                std::memcpy(&h, src + 2 * i, 2);
                data[static_cast<size_t>(i)] = dtype == "F16" ? half_to_float(h) : bf16_to_float(h);
            }
        } else {
            throw std::runtime_error("unsupported safetensors dtype '" + dtype + "' for '" + it.key() + "'");
        }
        out.emplace(it.key(), Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

void save_safetensors(const std::map<std::string, Tensor>& tensors, const fs::path& path) {
    json header = json::object();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const uint64_t bytes = static_cast<uint64_t>(t.numel()) * 4;
        header[name] = {{"dtype", "F32"}, {"shape", t.shape()}, {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    std::string hs = header.dump();
    // Pad header to 8-byte alignment with spaces, as producers conventionally do.
    while (hs.size() % 8 != 0) hs.push_back(' ');

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write safetensors file: " + path.string());
    const uint64_t header_len = hs.size();
    f.write(reinterpret_cast<const char*>(&header_len), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : tensors) {
        f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
    }
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace gate::backend
