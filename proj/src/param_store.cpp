#include "lgi/param_store.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "lgi/tensor_io.hpp"

namespace lgi {

using namespace io_detail;

template <class T>
void BasicParamStore<T>::add(std::string name, BasicTensor<T> value)
{
    if (find(name) != nullptr) {
        throw ConfigError("duplicate parameter name \"" + name + "\"");
    }
    if (name.empty() || name.size() > 0xffff) {
        throw ConfigError("parameter name length must be in [1, 65535]");
    }
    BasicTensor<T> grad(value.shape());
    entries_.push_back({std::move(name), std::move(value), std::move(grad)});
}

template <class T>
auto BasicParamStore<T>::find(std::string_view name) -> Entry*
{
    for (auto& e : entries_) {
        if (e.name == name) {
            return &e;
        }
    }
    return nullptr;
}

template <class T>
auto BasicParamStore<T>::find(std::string_view name) const -> const Entry*
{
    return const_cast<BasicParamStore*>(this)->find(name);
}

template <class T>
std::vector<std::string> BasicParamStore<T>::names() const
{
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        out.push_back(e.name);
    }
    return out;
}

template <class T>
std::int64_t BasicParamStore<T>::count_params(std::string_view prefix) const
{
    std::int64_t total = 0;
    for (const auto& e : entries_) {
        if (std::string_view(e.name).starts_with(prefix)) {
            total += e.value.numel();
        }
    }
    return total;
}

template <class T>
void BasicParamStore<T>::zero_grad()
{
    for (auto& e : entries_) {
        e.grad.fill(T(0));
    }
}

template <class T>
void BasicParamStore<T>::write(std::ostream& os) const
{
    os.write("LGIP", 4);
    write_u32(os, kFormatVersion);
    write_u32(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        write_u16(os, static_cast<std::uint16_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_tensor(os, e.value);
    }
    if (!os) {
        throw FormatError("ParamStore::write: stream failure");
    }
}

template <class T>
BasicParamStore<T> BasicParamStore<T>::read(std::istream& is)
{
    char magic[4];
    read_exact(is, magic, 4, "parameter store magic");
    if (std::memcmp(magic, "LGIP", 4) != 0) {
        throw FormatError("bad parameter store magic (expected \"LGIP\")");
    }
    const std::uint32_t version = read_u32(is);
    if (version != kFormatVersion) {
        throw FormatError("unsupported parameter store version " + std::to_string(version));
    }
    const std::uint32_t count = read_u32(is);
    BasicParamStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t len = read_u16(is);
        std::string name(len, '\0');
        read_exact(is, name.data(), len, "parameter name");
        try {
            store.add(std::move(name), read_tensor_as<T>(is));
        } catch (const ConfigError& e) {
            throw FormatError(e.what());
        }
    }
    return store;
}

template <class T>
void BasicParamStore<T>::save(const std::filesystem::path& path) const
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    write(os);
}

template <class T>
BasicParamStore<T> BasicParamStore<T>::load(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw FormatError("cannot open " + path.string());
    }
    return read(is);
}

template class BasicParamStore<float>;
template class BasicParamStore<double>;

} // namespace lgi
