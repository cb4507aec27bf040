#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lgi/tensor.hpp"

namespace lgi {

// Parameter structs expose
//   template <class Self, class F> static void each(Self& self, const std::string& prefix, F&& f)
// which calls f(name, tensor) for every learnable tensor in a fixed order.
// The helpers below work for both const and mutable structs.
template <class P, class F>
void for_each_param(P& params, const std::string& prefix, F&& f)
{
    std::remove_const_t<P>::each(params, prefix, f);
}

// Deep copy with every tensor zeroed; the usual way to make a gradient struct.
template <class P>
P zeros_like_params(const P& params)
{
    P out = params;
    for_each_param(out, "", [](const std::string&, auto& t) { t.fill(0); });
    return out;
}

template <class P>
std::vector<std::string> param_names(const P& params, const std::string& prefix)
{
    std::vector<std::string> names;
    for_each_param(params, prefix, [&](const std::string& name, const auto&) { names.push_back(name); });
    return names;
}

template <class P>
std::int64_t param_count(const P& params)
{
    std::int64_t total = 0;
    for_each_param(params, "", [&](const std::string&, const auto& t) { total += t.numel(); });
    return total;
}

// Pointers to every tensor of a parameter struct, in visitation order.
template <class T, class P>
std::vector<BasicTensor<T>*> collect_tensors(P& params)
{
    std::vector<BasicTensor<T>*> out;
    for_each_param(params, "", [&](const std::string&, BasicTensor<T>& t) { out.push_back(&t); });
    return out;
}

// into += from, tensor by tensor.
template <class T, class P>
void accumulate_params(P& into, const P& from)
{
    std::vector<const BasicTensor<T>*> src;
    for_each_param(from, "", [&](const std::string&, const BasicTensor<T>& t) { src.push_back(&t); });
    std::size_t i = 0;
    for_each_param(into, "", [&](const std::string&, BasicTensor<T>& t) { add_inplace(t, *src.at(i++)); });
}

// Named, ordered collection of tensors with matching gradient slots.
// File format: "LGIP" | u32 version=1 | u32 count | per entry:
//   u16 name length | UTF-8 name | embedded tensor record.
template <class T>
class BasicParamStore {
public:
    struct Entry {
        std::string name;
        BasicTensor<T> value;
        BasicTensor<T> grad;
    };

    // Throws ConfigError on duplicate names.
    void add(std::string name, BasicTensor<T> value);

    Entry* find(std::string_view name);
    const Entry* find(std::string_view name) const;

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::vector<std::string> names() const;

    // Total element count of entries whose name starts with `prefix`.
    std::int64_t count_params(std::string_view prefix = {}) const;

    void zero_grad();

    void write(std::ostream& os) const;
    static BasicParamStore read(std::istream& is);
    void save(const std::filesystem::path& path) const;
    static BasicParamStore load(const std::filesystem::path& path);

    // Snapshot a parameter struct under `prefix`.
    template <class P>
    static BasicParamStore from_params(const P& params, const std::string& prefix = "")
    {
        BasicParamStore store;
        for_each_param(params, prefix, [&](const std::string& name, const auto& t) { store.add(name, t); });
        return store;
    }

    // Copy values into a parameter struct; every name must exist with a matching shape.
    template <class P>
    void load_into(P& params, const std::string& prefix = "") const
    {
        for_each_param(params, prefix, [&](const std::string& name, auto& t) {
            const Entry* e = find(name);
            if (e == nullptr) {
                throw FormatError("parameter store has no entry \"" + name + "\"");
            }
            if (e->value.shape() != t.shape()) {
                throw FormatError("parameter \"" + name + "\" has shape " + e->value.shape().str() + ", expected " +
                                  t.shape().str());
            }
            t = e->value;
        });
    }

private:
    std::vector<Entry> entries_;
};

using ParamStore = BasicParamStore<float>;

} // namespace lgi
