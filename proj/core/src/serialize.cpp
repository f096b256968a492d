#include "peftser/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace peftser {

namespace {

constexpr char kMagic[4] = {'P', 'E', 'F', 'T'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    const uint64_t bits = std::bit_cast<uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<unsigned char>(bits >> (8 * i));
    }
    os.write(reinterpret_cast<const char*>(b), 8);
}

bool get_u32(std::istream& is, uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        return false;
    }
    v = static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
        static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    return true;
}

bool get_f64(std::istream& is, double& v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        return false;
    }
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    }
    v = std::bit_cast<double>(bits);
    return true;
}

} // namespace

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("save_tensor: cannot open " + path.string());
    }
    os.write(kMagic, 4);
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) {
        put_u32(os, static_cast<uint32_t>(d));
    }
    for (double v : t.data()) {
        put_f64(os, v);
    }
    if (!os) {
        throw DataError("save_tensor: write failed for " + path.string());
    }
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("load_tensor: cannot open " + path.string());
    }
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("load_tensor: bad magic in " + path.string());
    }
    uint32_t rank = 0;
    if (!get_u32(is, rank) || rank > 8) {
        throw DataError("load_tensor: bad rank in " + path.string());
    }
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) {
        uint32_t d = 0;
        if (!get_u32(is, d)) {
            throw DataError("load_tensor: truncated header in " + path.string());
        }
        shape[i] = static_cast<int64_t>(d);
    }
    const int64_t n = numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        if (!get_f64(is, data[static_cast<size_t>(i)])) {
            throw DataError("load_tensor: truncated payload in " + path.string());
        }
    }
    return Tensor(std::move(shape), std::move(data));
}

} // namespace peftser
