#include "lgi/conv.hpp"

#include <algorithm>
#include <cmath>

#include "lgi/flops.hpp"

namespace lgi {

namespace {

template <class A, class T>
inline void axpy(A a, const T* x, A* y, std::int64_t n)
{
    for (std::int64_t i = 0; i < n; ++i) {
        y[i] += a * x[i];
    }
}

// col[(ci*k + ky)*k + kx][oy*w_out + ox]
template <class T>
void im2col(const T* x, std::int64_t c_in, std::int64_t h, std::int64_t w, int k, int stride, int pad,
            std::int64_t h_out, std::int64_t w_out, T* col)
{
    const std::int64_t hw_out = h_out * w_out;
    for (std::int64_t ci = 0; ci < c_in; ++ci) {
        const T* src = x + ci * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col + ((ci * k + ky) * k + kx) * hw_out;
                for (std::int64_t oy = 0; oy < h_out; ++oy) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    T* row = dst + oy * w_out;
                    if (iy < 0 || iy >= h) {
                        std::fill(row, row + w_out, T(0));
                        continue;
                    }
                    for (std::int64_t ox = 0; ox < w_out; ++ox) {
                        const std::int64_t ix = ox * stride - pad + kx;
                        row[ox] = (ix >= 0 && ix < w) ? src[iy * w + ix] : T(0);
                    }
                }
            }
        }
    }
}

// Transposed layout: colT[oy*w_out + ox][(ci*k + ky)*k + kx]
template <class T>
void im2col_t(const T* x, std::int64_t c_in, std::int64_t h, std::int64_t w, int k, int stride, int pad,
              std::int64_t h_out, std::int64_t w_out, T* colt)
{
    const std::int64_t kk_total = c_in * k * k;
    for (std::int64_t oy = 0; oy < h_out; ++oy) {
        for (std::int64_t ox = 0; ox < w_out; ++ox) {
            T* dst = colt + (oy * w_out + ox) * kk_total;
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
                const T* src = x + ci * h * w;
                for (int ky = 0; ky < k; ++ky) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const std::int64_t ix = ox * stride - pad + kx;
                        *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? src[iy * w + ix] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const T* col, std::int64_t c_in, std::int64_t h, std::int64_t w, int k, int stride, int pad,
                std::int64_t h_out, std::int64_t w_out, T* x)
{
    const std::int64_t hw_out = h_out * w_out;
    for (std::int64_t ci = 0; ci < c_in; ++ci) {
        T* dst = x + ci * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col + ((ci * k + ky) * k + kx) * hw_out;
                for (std::int64_t oy = 0; oy < h_out; ++oy) {
                    const std::int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        continue;
                    }
                    for (std::int64_t ox = 0; ox < w_out; ++ox) {
                        const std::int64_t ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) {
                            dst[iy * w + ix] += src[oy * w_out + ox];
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void check_params(const ConvParams<T>& p)
{
    const Shape ws = p.weight.shape();
    if (ws.h != ws.w || ws.h < 1) {
        throw ShapeError("conv2d: kernel must be square, got weight " + ws.str());
    }
    if (p.bias.shape() != Shape{1, ws.n, 1, 1}) {
        throw ShapeError("conv2d: bias shape " + p.bias.shape().str() + " does not match weight " + ws.str());
    }
    if (p.stride < 1 || p.padding < 0) {
        throw ShapeError("conv2d: stride must be positive and padding nonnegative");
    }
}

template <class T>
bool is_pointwise(const ConvParams<T>& p)
{
    return p.kernel() == 1 && p.stride == 1 && p.padding == 0;
}

} // namespace

std::int64_t conv_out_size(std::int64_t in, int k, int stride, int padding)
{
    return (in + 2 * padding - k) / stride + 1;
}

template <class T>
ConvParams<T> make_conv(std::int64_t c_in, std::int64_t c_out, int k, int stride, Rng& rng)
{
    ConvParams<T> p;
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * k * k));
    p.weight = random_uniform<T>({c_out, c_in, k, k}, rng, -bound, bound);
    p.bias = BasicTensor<T>({1, c_out, 1, 1});
    p.stride = stride;
    p.padding = (k - 1) / 2;
    return p;
}

template <class T>
ConvParams<T> zero_conv(std::int64_t c_in, std::int64_t c_out, int k, int stride)
{
    ConvParams<T> p;
    p.weight = BasicTensor<T>({c_out, c_in, k, k});
    p.bias = BasicTensor<T>({1, c_out, 1, 1});
    p.stride = stride;
    p.padding = (k - 1) / 2;
    return p;
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p)
{
    check_params(p);
    const Shape xs = x.shape();
    if (xs.c != p.in_channels()) {
        throw ShapeError("conv2d: input " + xs.str() + " has " + std::to_string(xs.c) + " channels, weight " +
                         p.weight.shape().str() + " expects " + std::to_string(p.in_channels()));
    }
    const int k = static_cast<int>(p.kernel());
    const std::int64_t h_out = conv_out_size(xs.h, k, p.stride, p.padding);
    const std::int64_t w_out = conv_out_size(xs.w, k, p.stride, p.padding);
    if (xs.h < 1 || xs.w < 1 || h_out < 1 || w_out < 1) {
        throw ShapeError("conv2d: input " + xs.str() + " too small for kernel " + std::to_string(k));
    }
    const std::int64_t c_out = p.out_channels();
    const std::int64_t kk_total = xs.c * k * k;
    const std::int64_t hw = h_out * w_out;

    BasicTensor<T> out({xs.n, c_out, h_out, w_out});
    std::vector<T> col;
    if (!is_pointwise(p)) {
        col.resize(static_cast<std::size_t>(kk_total * hw));
    }
    // Double accumulation keeps f32 results within an ulp of the exact sum, so
    // algebraically equal kernels (split branches vs fused) agree to ~1e-6.
    std::vector<double> acc(static_cast<std::size_t>(hw));
    std::int64_t macs = 0;
    for (std::int64_t n = 0; n < xs.n; ++n) {
        const T* cols = x.plane(n, 0);
        if (!is_pointwise(p)) {
            im2col(x.plane(n, 0), xs.c, xs.h, xs.w, k, p.stride, p.padding, h_out, w_out, col.data());
            cols = col.data();
        }
        for (std::int64_t co = 0; co < c_out; ++co) {
            const T* wrow = p.weight.raw() + co * kk_total;
            std::fill(acc.begin(), acc.end(), static_cast<double>(p.bias[co]));
            for (std::int64_t kk = 0; kk < kk_total; ++kk) {
                axpy(static_cast<double>(wrow[kk]), cols + kk * hw, acc.data(), hw);
                macs += hw;
            }
            T* row = out.plane(n, co);
            for (std::int64_t i = 0; i < hw; ++i) {
                row[i] = static_cast<T>(acc[i]);
            }
        }
    }
    flops::record(2 * macs + xs.n * c_out * hw);
    return out;
}

template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& p, const BasicTensor<T>& grad_out)
{
    check_params(p);
    const Shape xs = x.shape();
    if (xs.c != p.in_channels()) {
        throw ShapeError("conv2d_backward: input " + xs.str() + " does not match weight " + p.weight.shape().str());
    }
    const int k = static_cast<int>(p.kernel());
    const std::int64_t h_out = conv_out_size(xs.h, k, p.stride, p.padding);
    const std::int64_t w_out = conv_out_size(xs.w, k, p.stride, p.padding);
    const std::int64_t c_out = p.out_channels();
    require_same_shape(grad_out.shape(), Shape{xs.n, c_out, h_out, w_out}, "conv2d_backward grad_out");

    const std::int64_t kk_total = xs.c * k * k;
    const std::int64_t hw = h_out * w_out;

    ConvGrads<T> g;
    g.x = BasicTensor<T>(xs);
    g.params = zero_conv<T>(xs.c, c_out, k, p.stride);
    g.params.padding = p.padding;
    T* gw = g.params.weight.raw();
    T* gb = g.params.bias.raw();

    std::vector<T> colt(static_cast<std::size_t>(kk_total * hw));
    std::vector<T> gcol;
    const bool pointwise = is_pointwise(p);
    if (!pointwise) {
        gcol.resize(static_cast<std::size_t>(kk_total * hw));
    }
    for (std::int64_t n = 0; n < xs.n; ++n) {
        im2col_t(x.plane(n, 0), xs.c, xs.h, xs.w, k, p.stride, p.padding, h_out, w_out, colt.data());
        for (std::int64_t co = 0; co < c_out; ++co) {
            const T* go = grad_out.plane(n, co);
            T* gwrow = gw + co * kk_total;
            T bsum = 0;
            for (std::int64_t i = 0; i < hw; ++i) {
                bsum += go[i];
                axpy(go[i], colt.data() + i * kk_total, gwrow, kk_total);
            }
            gb[co] += bsum;
        }
        T* gc = pointwise ? g.x.plane(n, 0) : gcol.data();
        if (!pointwise) {
            std::fill(gcol.begin(), gcol.end(), T(0));
        }
        for (std::int64_t co = 0; co < c_out; ++co) {
            const T* go = grad_out.plane(n, co);
            const T* wrow = p.weight.raw() + co * kk_total;
            for (std::int64_t kk = 0; kk < kk_total; ++kk) {
                axpy(wrow[kk], go, gc + kk * hw, hw);
            }
        }
        if (!pointwise) {
            col2im_add(gcol.data(), xs.c, xs.h, xs.w, k, p.stride, p.padding, h_out, w_out, g.x.plane(n, 0));
        }
    }
    return g;
}

template <class T>
BasicTensor<T> linear_tokens(const BasicTensor<T>& tokens, const ConvParams<T>& p)
{
    check_params(p);
    const Shape ts = tokens.shape();
    if (ts.c != 1 || p.kernel() != 1 || ts.w != p.in_channels()) {
        throw ShapeError("linear_tokens: tokens " + ts.str() + " incompatible with weight " + p.weight.shape().str());
    }
    const std::int64_t d_in = ts.w;
    const std::int64_t d_out = p.out_channels();
    const std::int64_t rows = ts.n * ts.h;
    BasicTensor<T> out({ts.n, 1, ts.h, d_out});
    // out[r][o] = b[o] + sum_i x[r][i] * W[o][i], computed as W^T-accumulation for contiguous access
    std::vector<T> wt(static_cast<std::size_t>(d_in * d_out));
    for (std::int64_t o = 0; o < d_out; ++o) {
        for (std::int64_t i = 0; i < d_in; ++i) {
            wt[i * d_out + o] = p.weight[o * d_in + i];
        }
    }
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* x = tokens.raw() + r * d_in;
        T* y = out.raw() + r * d_out;
        for (std::int64_t i = 0; i < d_in; ++i) {
            axpy(x[i], wt.data() + i * d_out, y, d_out);
        }
        for (std::int64_t o = 0; o < d_out; ++o) {
            y[o] += p.bias[o];
        }
    }
    flops::record(2 * rows * d_in * d_out + rows * d_out);
    return out;
}

template <class T>
ConvGrads<T> linear_tokens_backward(const BasicTensor<T>& tokens, const ConvParams<T>& p,
                                    const BasicTensor<T>& grad_out)
{
    const Shape ts = tokens.shape();
    const std::int64_t d_in = ts.w;
    const std::int64_t d_out = p.out_channels();
    require_same_shape(grad_out.shape(), Shape{ts.n, 1, ts.h, d_out}, "linear_tokens_backward grad_out");
    const std::int64_t rows = ts.n * ts.h;
    ConvGrads<T> g;
    g.x = BasicTensor<T>(ts);
    g.params = zero_conv<T>(d_in, d_out, 1, 1);
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* x = tokens.raw() + r * d_in;
        const T* go = grad_out.raw() + r * d_out;
        T* gx = g.x.raw() + r * d_in;
        for (std::int64_t o = 0; o < d_out; ++o) {
            g.params.bias[o] += go[o];
            axpy(go[o], x, g.params.weight.raw() + o * d_in, d_in);
            axpy(go[o], p.weight.raw() + o * d_in, gx, d_in);
        }
    }
    return g;
}

template <class T>
void accumulate(ConvParams<T>& a, const ConvParams<T>& b)
{
    add_inplace(a.weight, b.weight);
    add_inplace(a.bias, b.bias);
}

#define LGI_INSTANTIATE(T)                                                                                         \
    template ConvParams<T> make_conv<T>(std::int64_t, std::int64_t, int, int, Rng&);                               \
    template ConvParams<T> zero_conv<T>(std::int64_t, std::int64_t, int, int);                                     \
    template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const ConvParams<T>&);                                \
    template ConvGrads<T> conv2d_backward<T>(const BasicTensor<T>&, const ConvParams<T>&, const BasicTensor<T>&);  \
    template BasicTensor<T> linear_tokens<T>(const BasicTensor<T>&, const ConvParams<T>&);                         \
    template ConvGrads<T> linear_tokens_backward<T>(const BasicTensor<T>&, const ConvParams<T>&,                   \
                                                    const BasicTensor<T>&);                                        \
    template void accumulate<T>(ConvParams<T>&, const ConvParams<T>&);

LGI_INSTANTIATE(float)
LGI_INSTANTIATE(double)

} // namespace lgi
