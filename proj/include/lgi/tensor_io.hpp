#pragma once

#include <filesystem>
#include <iosfwd>
#include <variant>

#include "lgi/tensor.hpp"

namespace lgi {

// Binary tensor record (little-endian):
//   "LGIT" | u32 version=1 | u8 dtype (0=f32, 1=f64) | u8[3] reserved=0 |
//   u32 ndim=4 | u64[4] dims (n,c,h,w) | raw row-major payload
inline constexpr std::size_t kTensorHeaderBytes = 4 + 4 + 1 + 3 + 4 + 4 * 8;
inline constexpr std::uint32_t kFormatVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using AnyTensor = std::variant<Tensor, TensorD>;

template <class T> constexpr DType dtype_of();
template <> constexpr DType dtype_of<float>() { return DType::f32; }
template <> constexpr DType dtype_of<double>() { return DType::f64; }

template <class T> void write_tensor(std::ostream& os, const BasicTensor<T>& t);
AnyTensor read_tensor(std::istream& is);

// Reads a record of either dtype and converts to T.
template <class T> BasicTensor<T> read_tensor_as(std::istream& is);

template <class T> void save_tensor(const std::filesystem::path& path, const BasicTensor<T>& t);
AnyTensor load_tensor(const std::filesystem::path& path);
template <class T> BasicTensor<T> load_tensor_as(const std::filesystem::path& path);

// Little-endian primitive helpers shared with the ParamStore format.
namespace io_detail {
void write_u8(std::ostream& os, std::uint8_t v);
void write_u16(std::ostream& os, std::uint16_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
std::uint8_t read_u8(std::istream& is);
std::uint16_t read_u16(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
void read_exact(std::istream& is, char* dst, std::size_t n, const char* what);
} // namespace io_detail

} // namespace lgi
