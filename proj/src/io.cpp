#include "axwin/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace axwin {

static_assert(std::endian::native == std::endian::little,
              "AXTF IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'X', 'T', 'F'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write_axtf(const std::string& path, const Tensor& t) {
    std::string header;
    header.append(kMagic, 4);
    put_u16(header, kVersion);
    header.push_back(static_cast<char>(t.dtype() == Dtype::F32 ? 0 : 1));
    header.push_back(4);
    const Shape& s = t.shape();
    for (std::int64_t e : {s.n, s.h, s.w, s.c}) {
        if (e > 0xffffffffll) throw IoError("write_axtf: extent exceeds u32 range");
        put_u32(header, static_cast<std::uint32_t>(e));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_axtf: cannot open '" + path + "'");
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    if (t.dtype() == Dtype::F32) {
        const auto d = t.data<float>();
        f.write(reinterpret_cast<const char*>(d.data()),
                static_cast<std::streamsize>(d.size() * sizeof(float)));
    } else {
        const auto d = t.data<double>();
        f.write(reinterpret_cast<const char*>(d.data()),
                static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    if (!f) throw IoError("write_axtf: short write to '" + path + "'");
}

Tensor read_axtf(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_axtf: cannot open '" + path + "'");
    unsigned char header[24];
    f.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!f || std::memcmp(header, kMagic, 4) != 0) {
        throw IoError("read_axtf: '" + path + "' is not an AXTF file");
    }
    if (get_u16(header + 4) != kVersion) {
        throw IoError("read_axtf: unsupported AXTF version in '" + path + "'");
    }
    const unsigned char dtype_byte = header[6];
    if (dtype_byte > 1) throw IoError("read_axtf: bad dtype byte");
    if (header[7] != 4) throw IoError("read_axtf: only rank-4 tensors are supported");
    const Dtype dtype = dtype_byte == 0 ? Dtype::F32 : Dtype::F64;
    Shape shape{static_cast<std::int64_t>(get_u32(header + 8)),
                static_cast<std::int64_t>(get_u32(header + 12)),
                static_cast<std::int64_t>(get_u32(header + 16)),
                static_cast<std::int64_t>(get_u32(header + 20))};
    if (shape.n < 1 || shape.h < 1 || shape.w < 1 || shape.c < 1) {
        throw IoError("read_axtf: zero extent in '" + path + "'");
    }
    Tensor t(shape, dtype);
    const std::streamsize bytes =
        static_cast<std::streamsize>(shape.numel()) *
        static_cast<std::streamsize>(dtype_size(dtype));
    if (dtype == Dtype::F32) {
        f.read(reinterpret_cast<char*>(t.mutable_data<float>().data()), bytes);
    } else {
        f.read(reinterpret_cast<char*>(t.mutable_data<double>().data()), bytes);
    }
    if (!f || f.gcount() != bytes) throw IoError("read_axtf: truncated file '" + path + "'");
    char extra;
    if (f.read(&extra, 1)) throw IoError("read_axtf: trailing bytes in '" + path + "'");
    return t;
}

}  // namespace axwin
