#include "lgi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lgi/flops.hpp"

namespace lgi {

std::string Shape::str() const
{
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) +
           ")";
}

void require_same_shape(const Shape& a, const Shape& b, const char* op)
{
    if (a != b) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
    }
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape)
{
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
        throw ShapeError("negative dimension in " + shape.str());
    }
    data_.assign(static_cast<std::size_t>(shape.numel()), fill);
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data))
{
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
        throw ShapeError("negative dimension in " + shape.str());
    }
    if (static_cast<std::int64_t>(data_.size()) != shape.numel()) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape.str());
    }
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const
{
    if (shape.numel() != shape_.numel()) {
        throw ShapeError("reshape: " + shape_.str() + " -> " + shape.str() + " changes element count");
    }
    return BasicTensor(shape, data_);
}

template <class T>
void BasicTensor<T>::fill(T value)
{
    std::fill(data_.begin(), data_.end(), value);
}

namespace {

template <class T, class F>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* name, F f)
{
    require_same_shape(a.shape(), b.shape(), name);
    BasicTensor<T> out(a.shape());
    const T* pa = a.raw();
    const T* pb = b.raw();
    T* po = out.raw();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        po[i] = f(pa[i], pb[i]);
    }
    flops::record(n);
    return out;
}

template <class T, class F>
BasicTensor<T> unary(const BasicTensor<T>& a, F f)
{
    BasicTensor<T> out(a.shape());
    const T* pa = a.raw();
    T* po = out.raw();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        po[i] = f(pa[i]);
    }
    flops::record(n);
    return out;
}

} // namespace

template <class T>
T sigmoid_scalar(T x)
{
    T s;
    if (x >= T(0)) {
        s = T(1) / (T(1) + std::exp(-x));
    } else {
        const T e = std::exp(x);
        s = e / (T(1) + e);
    }
    constexpr T lo = std::numeric_limits<T>::denorm_min();
    const T hi = std::nextafter(T(1), T(0));
    return std::clamp(s, lo, hi);
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    return binary(a, b, "add", [](T x, T y) { return x + y; });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    return binary(a, b, "sub", [](T x, T y) { return x - y; });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    return binary(a, b, "mul", [](T x, T y) { return x * y; });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s)
{
    return unary(a, [s](T x) { return x * s; });
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a)
{
    return unary(a, [](T x) { return sigmoid_scalar(x); });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& a)
{
    return unary(a, [](T x) { return x > T(0) ? x : T(0); });
}

template <class T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>* b, T s)
{
    auto need_b = [&]() -> const BasicTensor<T>& {
        if (b == nullptr) {
            throw ShapeError("elementwise: binary op requires a second operand");
        }
        return *b;
    };
    switch (op) {
    case ElementwiseOp::add:
        return add(a, need_b());
    case ElementwiseOp::sub:
        return sub(a, need_b());
    case ElementwiseOp::mul:
        return mul(a, need_b());
    case ElementwiseOp::scalar_mul:
        return scale(a, s);
    case ElementwiseOp::sigmoid:
        return sigmoid(a);
    case ElementwiseOp::relu:
        return relu(a);
    }
    throw ShapeError("elementwise: unknown op");
}

template <class T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "add_inplace");
    T* pa = a.raw();
    const T* pb = b.raw();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        pa[i] += pb[i];
    }
}

template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& s, const BasicTensor<T>& grad_out)
{
    require_same_shape(s.shape(), grad_out.shape(), "sigmoid_backward");
    BasicTensor<T> g(s.shape());
    for (std::int64_t i = 0; i < s.numel(); ++i) {
        g[i] = grad_out[i] * s[i] * (T(1) - s[i]);
    }
    return g;
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& pre, const BasicTensor<T>& grad_out)
{
    require_same_shape(pre.shape(), grad_out.shape(), "relu_backward");
    BasicTensor<T> g(pre.shape());
    for (std::int64_t i = 0; i < pre.numel(); ++i) {
        g[i] = pre[i] > T(0) ? grad_out[i] : T(0);
    }
    return g;
}

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> channel_split(const BasicTensor<T>& x, std::int64_t k)
{
    const Shape s = x.shape();
    if (k <= 0 || k >= s.c) {
        throw ShapeError("channel_split: k=" + std::to_string(k) + " out of range (0, " + std::to_string(s.c) +
                         ") for " + s.str());
    }
    BasicTensor<T> first({s.n, k, s.h, s.w});
    BasicTensor<T> second({s.n, s.c - k, s.h, s.w});
    const std::int64_t plane = s.plane();
    for (std::int64_t n = 0; n < s.n; ++n) {
        const T* src = x.plane(n, 0);
        std::copy(src, src + k * plane, first.plane(n, 0));
        std::copy(src + k * plane, src + s.c * plane, second.plane(n, 0));
    }
    return {std::move(first), std::move(second)};
}

template <class T>
BasicTensor<T> channel_concat(std::span<const BasicTensor<T>> parts)
{
    if (parts.empty()) {
        throw ShapeError("channel_concat: no parts");
    }
    const Shape ref = parts[0].shape();
    std::int64_t channels = 0;
    for (const auto& p : parts) {
        const Shape s = p.shape();
        if (s.n != ref.n || s.h != ref.h || s.w != ref.w) {
            throw ShapeError("channel_concat: batch/spatial mismatch " + ref.str() + " vs " + s.str());
        }
        channels += s.c;
    }
    BasicTensor<T> out({ref.n, channels, ref.h, ref.w});
    const std::int64_t plane = ref.plane();
    for (std::int64_t n = 0; n < ref.n; ++n) {
        T* dst = out.plane(n, 0);
        for (const auto& p : parts) {
            const T* src = p.plane(n, 0);
            dst = std::copy(src, src + p.c() * plane, dst);
        }
    }
    return out;
}

template <class T>
double sum(const BasicTensor<T>& x)
{
    double acc = 0.0;
    for (T v : x.data()) {
        acc += static_cast<double>(v);
    }
    return acc;
}

template <class T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "dot");
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

template <class T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "max_abs_diff");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

template <class T>
bool all_finite(const BasicTensor<T>& x)
{
    return std::all_of(x.data().begin(), x.data().end(), [](T v) { return std::isfinite(v); });
}

template <class T>
std::pair<T, T> min_max(const BasicTensor<T>& x)
{
    if (x.empty()) {
        return {T(0), T(0)};
    }
    auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
    return {*lo, *hi};
}

template <class T>
BasicTensor<T> random_uniform(Shape shape, Rng& rng, double lo, double hi)
{
    BasicTensor<T> out(shape);
    for (auto& v : out.data()) {
        v = static_cast<T>(rng.uniform(lo, hi));
    }
    return out;
}

template <class T>
BasicTensor<T> random_normal(Shape shape, Rng& rng, double stddev)
{
    BasicTensor<T> out(shape);
    for (auto& v : out.data()) {
        v = static_cast<T>(rng.normal() * stddev);
    }
    return out;
}

#define LGI_INSTANTIATE(T)                                                                                         \
    template class BasicTensor<T>;                                                                                 \
    template T sigmoid_scalar<T>(T);                                                                               \
    template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> sub<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> mul<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                                                    \
    template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> elementwise<T>(ElementwiseOp, const BasicTensor<T>&, const BasicTensor<T>*, T);        \
    template void add_inplace<T>(BasicTensor<T>&, const BasicTensor<T>&);                                          \
    template BasicTensor<T> sigmoid_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                        \
    template std::pair<BasicTensor<T>, BasicTensor<T>> channel_split<T>(const BasicTensor<T>&, std::int64_t);      \
    template BasicTensor<T> channel_concat<T>(std::span<const BasicTensor<T>>);                                    \
    template double sum<T>(const BasicTensor<T>&);                                                                 \
    template double dot<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                          \
    template double max_abs_diff<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
    template bool all_finite<T>(const BasicTensor<T>&);                                                            \
    template std::pair<T, T> min_max<T>(const BasicTensor<T>&);                                                    \
    template BasicTensor<T> random_uniform<T>(Shape, Rng&, double, double);                                        \
    template BasicTensor<T> random_normal<T>(Shape, Rng&, double);

LGI_INSTANTIATE(float)
LGI_INSTANTIATE(double)

} // namespace lgi
