#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lgi/errors.hpp"
#include "lgi/rng.hpp"

namespace lgi {

// (n, c, h, w); row-major with w fastest.
struct Shape {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    std::int64_t numel() const { return n * c * h * w; }
    std::int64_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

// Token sequences (n, seq, d) are carried as (n, 1, seq, d).
inline Shape token_shape(std::int64_t n, std::int64_t seq, std::int64_t d) { return {n, 1, seq, d}; }

template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0));
    BasicTensor(Shape shape, std::vector<T> data);

    static BasicTensor zeros(Shape shape) { return BasicTensor(shape); }
    static BasicTensor full(Shape shape, T value) { return BasicTensor(shape, value); }

    const Shape& shape() const { return shape_; }
    std::int64_t n() const { return shape_.n; }
    std::int64_t c() const { return shape_.c; }
    std::int64_t h() const { return shape_.h; }
    std::int64_t w() const { return shape_.w; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* raw() { return data_.data(); }
    const T* raw() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    std::int64_t offset(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const
    {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) { return data_[offset(n, c, h, w)]; }
    const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const
    {
        return data_[offset(n, c, h, w)];
    }

    // Pointer to the (h, w) plane of sample n, channel c.
    T* plane(std::int64_t n, std::int64_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
    const T* plane(std::int64_t n, std::int64_t c) const
    {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }

    // Same data, new shape of equal element count.
    BasicTensor reshaped(Shape shape) const;

    template <class U>
    BasicTensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    void fill(T value);

    bool operator==(const BasicTensor&) const = default;

private:
    Shape shape_{};
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <class T>
BasicTensor<T> zeros_like(const BasicTensor<T>& x)
{
    return BasicTensor<T>(x.shape());
}

// Throws ShapeError naming both shapes when they differ.
void require_same_shape(const Shape& a, const Shape& b, const char* op);

// ---- elementwise -------------------------------------------------------------

enum class ElementwiseOp { add, sub, mul, scalar_mul, sigmoid, relu };

template <class T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> scale(const BasicTensor<T>& a, T s);
template <class T> BasicTensor<T> sigmoid(const BasicTensor<T>& a);
template <class T> BasicTensor<T> relu(const BasicTensor<T>& a);

// Dispatching form; `b` is required for add/sub/mul, `s` is the factor for scalar_mul.
template <class T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>* b = nullptr, T s = T(1));

// In-place a += b.
template <class T> void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b);

// Scalar logistic; saturates to the representable values nearest 0 and 1 so the
// result stays strictly inside (0, 1).
template <class T> T sigmoid_scalar(T x);

// Gradient helpers: grad_in = grad_out * s * (1 - s) given s = sigmoid(x).
template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& s, const BasicTensor<T>& grad_out);
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& pre, const BasicTensor<T>& grad_out);

// ---- channel split / concat ------------------------------------------------------

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> channel_split(const BasicTensor<T>& x, std::int64_t k);

template <class T>
BasicTensor<T> channel_concat(std::span<const BasicTensor<T>> parts);

template <class T>
BasicTensor<T> channel_concat(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    const BasicTensor<T> parts[] = {a, b};
    return channel_concat<T>(std::span<const BasicTensor<T>>(parts));
}

// ---- reductions / inspection ----------------------------------------------------

template <class T> double sum(const BasicTensor<T>& x);
template <class T> double dot(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> bool all_finite(const BasicTensor<T>& x);
template <class T> std::pair<T, T> min_max(const BasicTensor<T>& x);

// ---- random fill ------------------------------------------------------------------

template <class T> BasicTensor<T> random_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);
template <class T> BasicTensor<T> random_normal(Shape shape, Rng& rng, double stddev = 1.0);

} // namespace lgi
