#include "lgi/resize.hpp"

#include <algorithm>
#include <vector>

#include "lgi/flops.hpp"

namespace lgi {

namespace {

struct Tap {
    std::int64_t i0;
    std::int64_t i1;
    double l1; // weight of i1; i0 gets 1 - l1
};

std::vector<Tap> taps(std::int64_t in, std::int64_t out)
{
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        src = std::max(src, 0.0);
        auto i0 = static_cast<std::int64_t>(src);
        i0 = std::min(i0, in - 1);
        const std::int64_t i1 = std::min(i0 + 1, in - 1);
        t[static_cast<std::size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
}

void check_sizes(std::int64_t out_h, std::int64_t out_w, const Shape& s)
{
    if (out_h < 1 || out_w < 1) {
        throw ShapeError("bilinear_resize: target size must be positive, got " + std::to_string(out_h) + "x" +
                         std::to_string(out_w));
    }
    if (s.h < 1 || s.w < 1) {
        throw ShapeError("bilinear_resize: empty input " + s.str());
    }
}

} // namespace

template <class T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& x, std::int64_t out_h, std::int64_t out_w)
{
    const Shape s = x.shape();
    check_sizes(out_h, out_w, s);
    if (out_h == s.h && out_w == s.w) {
        return x;
    }
    const auto ty = taps(s.h, out_h);
    const auto tx = taps(s.w, out_w);
    BasicTensor<T> out({s.n, s.c, out_h, out_w});
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                const Tap& a = ty[static_cast<std::size_t>(oy)];
                const T wy1 = static_cast<T>(a.l1);
                const T wy0 = T(1) - wy1;
                const T* r0 = src + a.i0 * s.w;
                const T* r1 = src + a.i1 * s.w;
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    const Tap& b = tx[static_cast<std::size_t>(ox)];
                    const T wx1 = static_cast<T>(b.l1);
                    const T wx0 = T(1) - wx1;
                    const T v00 = r0[b.i0], v01 = r0[b.i1], v10 = r1[b.i0], v11 = r1[b.i1];
                    const T v = wy0 * wx0 * v00 + wy0 * wx1 * v01 + wy1 * wx0 * v10 + wy1 * wx1 * v11;
                    const T lo = std::min(std::min(v00, v01), std::min(v10, v11));
                    const T hi = std::max(std::max(v00, v01), std::max(v10, v11));
                    dst[oy * out_w + ox] = std::clamp(v, lo, hi);
                }
            }
        }
    }
    // counted as 4 weighted taps per output element: 4 multiplies + 3 adds
    flops::record(7 * out.numel());
    return out;
}

template <class T>
BasicTensor<T> bilinear_resize_backward(const BasicTensor<T>& grad_out, std::int64_t in_h, std::int64_t in_w)
{
    const Shape s = grad_out.shape();
    check_sizes(s.h, s.w, Shape{s.n, s.c, in_h, in_w});
    if (s.h == in_h && s.w == in_w) {
        return grad_out;
    }
    const auto ty = taps(in_h, s.h);
    const auto tx = taps(in_w, s.w);
    BasicTensor<T> g({s.n, s.c, in_h, in_w});
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* go = grad_out.plane(n, c);
            T* dst = g.plane(n, c);
            for (std::int64_t oy = 0; oy < s.h; ++oy) {
                const Tap& a = ty[static_cast<std::size_t>(oy)];
                const T wy1 = static_cast<T>(a.l1);
                const T wy0 = T(1) - wy1;
                for (std::int64_t ox = 0; ox < s.w; ++ox) {
                    const Tap& b = tx[static_cast<std::size_t>(ox)];
                    const T wx1 = static_cast<T>(b.l1);
                    const T wx0 = T(1) - wx1;
                    const T v = go[oy * s.w + ox];
                    dst[a.i0 * in_w + b.i0] += wy0 * wx0 * v;
                    dst[a.i0 * in_w + b.i1] += wy0 * wx1 * v;
                    dst[a.i1 * in_w + b.i0] += wy1 * wx0 * v;
                    dst[a.i1 * in_w + b.i1] += wy1 * wx1 * v;
                }
            }
        }
    }
    return g;
}

template BasicTensor<float> bilinear_resize<float>(const BasicTensor<float>&, std::int64_t, std::int64_t);
template BasicTensor<double> bilinear_resize<double>(const BasicTensor<double>&, std::int64_t, std::int64_t);
template BasicTensor<float> bilinear_resize_backward<float>(const BasicTensor<float>&, std::int64_t, std::int64_t);
template BasicTensor<double> bilinear_resize_backward<double>(const BasicTensor<double>&, std::int64_t,
                                                              std::int64_t);

} // namespace lgi
