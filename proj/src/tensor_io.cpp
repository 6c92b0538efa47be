#include "ggnet/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ggnet {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xFFu), static_cast<char>((v >> 8) & 0xFFu),
                                static_cast<char>((v >> 16) & 0xFFu), static_cast<char>((v >> 24) & 0xFFu)};
    os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    if (!is) throw DataError("GGT1: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

std::size_t serialized_size(const Shape& shape) { return 4 + 4 * 4 + shape.numel() * 4; }

void write_tensor(std::ostream& os, const Tensor<float>& t) {
    os.write(kTensorMagic, 4);
    const Shape& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) {
        put_u32(os, std::bit_cast<std::uint32_t>(t[i]));
    }
    if (!os) throw DataError("GGT1: write failed");
}

Tensor<float> read_tensor(std::istream& is) {
    char magic[4]{};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kTensorMagic, 4) != 0) throw DataError("GGT1: bad magic");
    Shape s;
    s.n = static_cast<int>(get_u32(is));
    s.c = static_cast<int>(get_u32(is));
    s.h = static_cast<int>(get_u32(is));
    s.w = static_cast<int>(get_u32(is));
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw DataError("GGT1: shape field overflows int");
    Tensor<float> t(s);
    for (std::size_t i = 0; i < t.size(); ++i) {
        try {
            t[i] = std::bit_cast<float>(get_u32(is));
        } catch (const DataError&) {
            throw DataError("GGT1: truncated payload for shape " + s.str());
        }
    }
    return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_tensor(os, t);
}

Tensor<float> load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return read_tensor(is);
}

} // namespace ggnet
