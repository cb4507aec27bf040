#include "lgi/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace lgi {

namespace io_detail {

namespace {

template <class U>
void write_le(std::ostream& os, U v)
{
    std::array<char, sizeof(U)> bytes;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    os.write(bytes.data(), bytes.size());
}

template <class U>
U read_le(std::istream& is, const char* what)
{
    std::array<char, sizeof(U)> bytes;
    read_exact(is, bytes.data(), bytes.size(), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    }
    return v;
}

} // namespace

void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }
void write_u16(std::ostream& os, std::uint16_t v) { write_le(os, v); }
void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
std::uint8_t read_u8(std::istream& is) { return read_le<std::uint8_t>(is, "u8"); }
std::uint16_t read_u16(std::istream& is) { return read_le<std::uint16_t>(is, "u16"); }
std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is, "u32"); }
std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is, "u64"); }

void read_exact(std::istream& is, char* dst, std::size_t n, const char* what)
{
    is.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) {
        throw FormatError(std::string("truncated input while reading ") + what);
    }
}

} // namespace io_detail

using namespace io_detail;

namespace {

template <class T>
void write_payload(std::ostream& os, const BasicTensor<T>& t)
{
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
    } else {
        for (T v : t.data()) {
            write_le(os, std::bit_cast<Bits>(v));
        }
    }
}

template <class T>
BasicTensor<T> read_payload(std::istream& is, Shape shape)
{
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const auto count = static_cast<std::size_t>(shape.numel());
    std::vector<char> bytes(count * sizeof(T));
    read_exact(is, bytes.data(), bytes.size(), "tensor payload");
    std::vector<T> data(count);
    for (std::size_t i = 0; i < count; ++i) {
        Bits b = 0;
        for (std::size_t k = 0; k < sizeof(T); ++k) {
            b |= static_cast<Bits>(static_cast<unsigned char>(bytes[i * sizeof(T) + k])) << (8 * k);
        }
        data[i] = std::bit_cast<T>(b);
    }
    return BasicTensor<T>(shape, std::move(data));
}

} // namespace

template <class T>
void write_tensor(std::ostream& os, const BasicTensor<T>& t)
{
    os.write("LGIT", 4);
    write_u32(os, kFormatVersion);
    write_u8(os, static_cast<std::uint8_t>(dtype_of<T>()));
    for (int i = 0; i < 3; ++i) {
        write_u8(os, 0);
    }
    write_u32(os, 4);
    const Shape s = t.shape();
    for (std::int64_t d : {s.n, s.c, s.h, s.w}) {
        write_u64(os, static_cast<std::uint64_t>(d));
    }
    write_payload(os, t);
    if (!os) {
        throw FormatError("write_tensor: stream failure");
    }
}

AnyTensor read_tensor(std::istream& is)
{
    char magic[4];
    read_exact(is, magic, 4, "tensor magic");
    if (std::memcmp(magic, "LGIT", 4) != 0) {
        throw FormatError("bad tensor magic (expected \"LGIT\")");
    }
    const std::uint32_t version = read_u32(is);
    if (version != kFormatVersion) {
        throw FormatError("unsupported tensor format version " + std::to_string(version));
    }
    const std::uint8_t dtype = read_u8(is);
    if (dtype > 1) {
        throw FormatError("unknown tensor dtype code " + std::to_string(dtype));
    }
    for (int i = 0; i < 3; ++i) {
        if (read_u8(is) != 0) {
            throw FormatError("nonzero reserved byte in tensor header");
        }
    }
    const std::uint32_t ndim = read_u32(is);
    if (ndim != 4) {
        throw FormatError("tensor ndim must be 4, got " + std::to_string(ndim));
    }
    std::uint64_t dims[4];
    for (auto& d : dims) {
        d = read_u64(is);
        if (d > (std::uint64_t{1} << 40)) {
            throw FormatError("implausible tensor dimension " + std::to_string(d));
        }
    }
    const Shape shape{static_cast<std::int64_t>(dims[0]), static_cast<std::int64_t>(dims[1]),
                      static_cast<std::int64_t>(dims[2]), static_cast<std::int64_t>(dims[3])};
    const double elements = static_cast<double>(dims[0]) * static_cast<double>(dims[1]) *
                            static_cast<double>(dims[2]) * static_cast<double>(dims[3]);
    if (elements > static_cast<double>(std::uint64_t{1} << 32)) {
        throw FormatError("tensor element count exceeds 2^32 in " + shape.str());
    }
    if (dtype == 0) {
        return read_payload<float>(is, shape);
    }
    return read_payload<double>(is, shape);
}

template <class T>
BasicTensor<T> read_tensor_as(std::istream& is)
{
    return std::visit([](auto&& t) { return t.template cast<T>(); }, read_tensor(is));
}

template <class T>
void save_tensor(const std::filesystem::path& path, const BasicTensor<T>& t)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    write_tensor(os, t);
}

AnyTensor load_tensor(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw FormatError("cannot open " + path.string());
    }
    return read_tensor(is);
}

template <class T>
BasicTensor<T> load_tensor_as(const std::filesystem::path& path)
{
    return std::visit([](auto&& t) { return t.template cast<T>(); }, load_tensor(path));
}

template void write_tensor<float>(std::ostream&, const Tensor&);
template void write_tensor<double>(std::ostream&, const TensorD&);
template Tensor read_tensor_as<float>(std::istream&);
template TensorD read_tensor_as<double>(std::istream&);
template void save_tensor<float>(const std::filesystem::path&, const Tensor&);
template void save_tensor<double>(const std::filesystem::path&, const TensorD&);
template Tensor load_tensor_as<float>(const std::filesystem::path&);
template TensorD load_tensor_as<double>(const std::filesystem::path&);

} // namespace lgi
