#include "gate/store/npz.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gate::store {

namespace fs = std::filesystem;

uint32_t crc32(const uint8_t* data, size_t n, uint32_t seed) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = seed ^ 0xffffffffu;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

std::vector<uint8_t> npy_encode(const core::Tensor& t) {
    std::ostringstream hdr;
    hdr << "{'descr': '<f4', 'fortran_order': False, 'shape': (";
    for (int i = 0; i < t.rank(); ++i) {
        hdr << t.dim(i);
        if (t.rank() == 1 || i + 1 < t.rank()) hdr << (t.rank() == 1 ? "," : (i + 1 < t.rank() ? ", " : ""));
    }
    hdr << "), }";
    std::string h = hdr.str();
    // Pad so that magic(6) + version(2) + hlen(2) + header is a multiple of 64.
    size_t unpadded = 10 + h.size() + 1;
    size_t pad = (64 - unpadded % 64) % 64;
    h.append(pad, ' ');
    h.push_back('\n');

    std::vector<uint8_t> out;
    out.reserve(10 + h.size() + sizeof(float) * static_cast<size_t>(t.numel()));
    const char magic[] = "\x93NUMPY";
    out.insert(out.end(), magic, magic + 6);
    out.push_back(1);
    out.push_back(0);
    put_u16(out, static_cast<uint16_t>(h.size()));
    out.insert(out.end(), h.begin(), h.end());
    const auto* raw = reinterpret_cast<const uint8_t*>(t.data());
    out.insert(out.end(), raw, raw + sizeof(float) * static_cast<size_t>(t.numel()));
    return out;
}

core::Tensor npy_decode(const std::vector<uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0) {
        throw CorruptFileError("not an npy member in " + origin);
    }
    const uint16_t hlen = get_u16(bytes.data() + 8);
    if (bytes.size() < 10u + hlen) throw CorruptFileError("truncated npy header in " + origin);
    std::string header(reinterpret_cast<const char*>(bytes.data() + 10), hlen);
    if (header.find("'<f4'") == std::string::npos || header.find("False") == std::string::npos) {
        throw CorruptFileError("unsupported npy dtype/order in " + origin);
    }
    auto lp = header.find('(');
    auto rp = header.find(')', lp);
    if (lp == std::string::npos || rp == std::string::npos) {
        throw CorruptFileError("bad npy shape in " + origin);
    }
    std::vector<int64_t> shape;
    std::string dims = header.substr(lp + 1, rp - lp - 1);
    std::istringstream ss(dims);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::string trimmed;
        for (char c : tok)
            if (!std::isspace(static_cast<unsigned char>(c))) trimmed.push_back(c);
        if (!trimmed.empty()) shape.push_back(std::stoll(trimmed));
    }
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    const size_t expected = 10u + hlen + sizeof(float) * static_cast<size_t>(n);
    if (bytes.size() != expected) throw CorruptFileError("npy payload size mismatch in " + origin);
    std::vector<float> data(static_cast<size_t>(n));
    std::memcpy(data.data(), bytes.data() + 10 + hlen, sizeof(float) * static_cast<size_t>(n));
    return core::Tensor(std::move(shape), std::move(data));
}

}  // namespace

void NpzWriter::add_array(const std::string& name, const core::Tensor& t) {
    entries_.push_back({name + ".npy", npy_encode(t)});
}

void NpzWriter::add_text(const std::string& name, const std::string& text) {
    entries_.push_back({name, std::vector<uint8_t>(text.begin(), text.end())});
}

std::vector<uint8_t> NpzWriter::to_bytes() const {
    std::vector<uint8_t> out;
    struct CentralRecord {
        std::string name;
        uint32_t crc, size, offset;
    };
    std::vector<CentralRecord> central;
    for (const Entry& e : entries_) {
        const uint32_t offset = static_cast<uint32_t>(out.size());
        const uint32_t crc = crc32(e.payload.data(), e.payload.size());
        const uint32_t sz = static_cast<uint32_t>(e.payload.size());
        put_u32(out, 0x04034b50u);  // local file header
        put_u16(out, 20);           // version needed
        put_u16(out, 0);            // flags
        put_u16(out, 0);            // method: stored
        put_u16(out, 0);            // mod time
        put_u16(out, 0);            // mod date
        put_u32(out, crc);
        put_u32(out, sz);
        put_u32(out, sz);
        put_u16(out, static_cast<uint16_t>(e.name.size()));
        put_u16(out, 0);  // extra len
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.insert(out.end(), e.payload.begin(), e.payload.end());
        central.push_back({e.name, crc, sz, offset});
    }
    const uint32_t cd_start = static_cast<uint32_t>(out.size());
    for (const CentralRecord& r : central) {
        put_u32(out, 0x02014b50u);
        put_u16(out, 20);
        put_u16(out, 20);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u32(out, r.crc);
        put_u32(out, r.size);
        put_u32(out, r.size);
        put_u16(out, static_cast<uint16_t>(r.name.size()));
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u32(out, 0);
        put_u32(out, r.offset);
        out.insert(out.end(), r.name.begin(), r.name.end());
    }
    const uint32_t cd_size = static_cast<uint32_t>(out.size()) - cd_start;
    put_u32(out, 0x06054b50u);  // end of central directory
    put_u16(out, 0);
    put_u16(out, 0);
    put_u16(out, static_cast<uint16_t>(central.size()));
    put_u16(out, static_cast<uint16_t>(central.size()));
    put_u32(out, cd_size);
    put_u32(out, cd_start);
    put_u16(out, 0);
    return out;
}

void NpzWriter::write_atomic(const fs::path& path) const {
    const std::vector<uint8_t> bytes = to_bytes();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw StoreError("cannot open for write: " + tmp.string());
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        f.flush();
        if (!f) throw StoreError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

NpzFile NpzFile::read(const fs::path& path) {
    if (!fs::exists(path)) throw MissingFileError("no such file: " + path.string());
    std::ifstream f(path, std::ios::binary);
    if (!f) throw StoreError("cannot open: " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_bytes(bytes, path.string());
}

NpzFile NpzFile::from_bytes(const std::vector<uint8_t>& bytes, const std::string& origin) {
    NpzFile out;
    size_t pos = 0;
    bool saw_member = false;
    while (pos + 4 <= bytes.size() && get_u32(bytes.data() + pos) == 0x04034b50u) {
        if (pos + 30 > bytes.size()) throw CorruptFileError("truncated zip header: " + origin);
        const uint16_t method = get_u16(bytes.data() + pos + 8);
        const uint32_t crc = get_u32(bytes.data() + pos + 14);
        const uint32_t csize = get_u32(bytes.data() + pos + 18);
        const uint32_t usize = get_u32(bytes.data() + pos + 22);
        const uint16_t nlen = get_u16(bytes.data() + pos + 26);
        const uint16_t xlen = get_u16(bytes.data() + pos + 28);
        if (method != 0 || csize != usize) throw CorruptFileError("unsupported zip member in " + origin);
        const size_t data_at = pos + 30 + nlen + xlen;
        if (data_at + csize > bytes.size()) throw CorruptFileError("truncated zip member in " + origin);
        std::string name(reinterpret_cast<const char*>(bytes.data() + pos + 30), nlen);
        std::vector<uint8_t> payload(bytes.begin() + static_cast<long>(data_at),
                                     bytes.begin() + static_cast<long>(data_at + csize));
        if (crc32(payload.data(), payload.size()) != crc) {
            throw CorruptFileError("crc mismatch for member '" + name + "' in " + origin);
        }
        if (name.size() > 4 && name.substr(name.size() - 4) == ".npy") {
            out.arrays.emplace(name.substr(0, name.size() - 4), npy_decode(payload, origin));
        } else {
            out.texts.emplace(name, std::string(payload.begin(), payload.end()));
        }
        saw_member = true;
        pos = data_at + csize;
    }
    if (!saw_member) throw CorruptFileError("not a zip container: " + origin);
    // The central directory must be present and start where we stopped.
    if (pos + 4 > bytes.size() || get_u32(bytes.data() + pos) != 0x02014b50u) {
        throw CorruptFileError("missing central directory: " + origin);
    }
    return out;
}

}  // namespace gate::store
