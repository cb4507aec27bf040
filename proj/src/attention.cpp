#include "lgi/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lgi/flops.hpp"

namespace lgi {

template <class T>
AttentionParams<T> make_attention(std::int64_t d_model, int heads, std::int64_t d_ff, Rng& rng)
{
    if (heads < 1 || d_model % heads != 0) {
        throw ConfigError("attention: d_model " + std::to_string(d_model) + " not divisible by heads " +
                          std::to_string(heads));
    }
    AttentionParams<T> p;
    p.heads = heads;
    auto ln = [&] {
        return LayerNormParams<T>{BasicTensor<T>::full({1, d_model, 1, 1}, T(1)), BasicTensor<T>({1, d_model, 1, 1})};
    };
    p.ln1 = ln();
    p.q = make_conv<T>(d_model, d_model, 1, 1, rng);
    p.k = make_conv<T>(d_model, d_model, 1, 1, rng);
    p.v = make_conv<T>(d_model, d_model, 1, 1, rng);
    p.o = make_conv<T>(d_model, d_model, 1, 1, rng);
    p.ln2 = ln();
    p.ffn1 = make_conv<T>(d_model, d_ff, 1, 1, rng);
    p.ffn2 = make_conv<T>(d_ff, d_model, 1, 1, rng);
    return p;
}

template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& tokens, const LayerNormParams<T>& p, LayerNormCache<T>* cache)
{
    const Shape s = tokens.shape();
    const std::int64_t d = s.w;
    if (s.c != 1 || p.gamma.numel() != d || p.beta.numel() != d) {
        throw ShapeError("layer_norm: tokens " + s.str() + " vs gamma " + p.gamma.shape().str());
    }
    const std::int64_t rows = s.n * s.h;
    BasicTensor<T> out(s);
    BasicTensor<T> xhat(s);
    std::vector<T> rstd(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* x = tokens.raw() + r * d;
        T mean = 0;
        for (std::int64_t i = 0; i < d; ++i) {
            mean += x[i];
        }
        mean /= static_cast<T>(d);
        T var = 0;
        for (std::int64_t i = 0; i < d; ++i) {
            const T dv = x[i] - mean;
            var += dv * dv;
        }
        var /= static_cast<T>(d);
        const T rs = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
        rstd[static_cast<std::size_t>(r)] = rs;
        T* xh = xhat.raw() + r * d;
        T* y = out.raw() + r * d;
        for (std::int64_t i = 0; i < d; ++i) {
            xh[i] = (x[i] - mean) * rs;
            y[i] = xh[i] * p.gamma[i] + p.beta[i];
        }
    }
    // mean 1, variance 3, normalize 2, affine 2 per element
    flops::record(8 * tokens.numel());
    if (cache != nullptr) {
        cache->xhat = std::move(xhat);
        cache->rstd = std::move(rstd);
    }
    return out;
}

template <class T>
BasicTensor<T> layer_norm_backward(const LayerNormCache<T>& cache, const LayerNormParams<T>& p,
                                   const BasicTensor<T>& grad_out, LayerNormParams<T>& grad_params)
{
    const Shape s = grad_out.shape();
    const std::int64_t d = s.w;
    const std::int64_t rows = s.n * s.h;
    require_same_shape(cache.xhat.shape(), s, "layer_norm_backward");
    if (grad_params.gamma.numel() != d) {
        grad_params.gamma = BasicTensor<T>({1, d, 1, 1});
        grad_params.beta = BasicTensor<T>({1, d, 1, 1});
    }
    BasicTensor<T> gx(s);
    std::vector<T> gxh(static_cast<std::size_t>(d));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* go = grad_out.raw() + r * d;
        const T* xh = cache.xhat.raw() + r * d;
        T mean_g = 0;
        T mean_gx = 0;
        for (std::int64_t i = 0; i < d; ++i) {
            grad_params.gamma[i] += go[i] * xh[i];
            grad_params.beta[i] += go[i];
            gxh[static_cast<std::size_t>(i)] = go[i] * p.gamma[i];
            mean_g += gxh[static_cast<std::size_t>(i)];
            mean_gx += gxh[static_cast<std::size_t>(i)] * xh[i];
        }
        mean_g /= static_cast<T>(d);
        mean_gx /= static_cast<T>(d);
        const T rs = cache.rstd[static_cast<std::size_t>(r)];
        T* g = gx.raw() + r * d;
        for (std::int64_t i = 0; i < d; ++i) {
            g[i] = rs * (gxh[static_cast<std::size_t>(i)] - mean_g - xh[i] * mean_gx);
        }
    }
    return gx;
}

template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& x)
{
    BasicTensor<T> out(x.shape());
    const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        out[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
    }
    flops::record(x.numel());
    return out;
}

template <class T>
BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out)
{
    require_same_shape(x.shape(), grad_out.shape(), "gelu_backward");
    BasicTensor<T> g(x.shape());
    const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
    const T inv_sqrt2pi = static_cast<T>(1.0 / std::sqrt(2.0 * std::numbers::pi));
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T v = x[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        g[i] = grad_out[i] * (cdf + v * pdf);
    }
    return g;
}

template <class T>
void softmax_rows(std::span<const T> logits, std::int64_t cols, std::span<T> out)
{
    const auto rows = static_cast<std::int64_t>(logits.size()) / cols;
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* in = logits.data() + r * cols;
        T* o = out.data() + r * cols;
        const T m = *std::max_element(in, in + cols);
        T s = 0;
        for (std::int64_t j = 0; j < cols; ++j) {
            o[j] = std::exp(in[j] - m);
            s += o[j];
        }
        const T inv = T(1) / s;
        for (std::int64_t j = 0; j < cols; ++j) {
            o[j] *= inv;
        }
    }
    // subtract, exp, sum, scale
    flops::record(4 * static_cast<std::int64_t>(logits.size()));
}

template <class T>
BasicTensor<T> to_tokens(const BasicTensor<T>& x)
{
    const Shape s = x.shape();
    const std::int64_t hw = s.plane();
    BasicTensor<T> t(token_shape(s.n, hw, s.c));
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            const T* src = x.plane(n, c);
            T* dst = t.raw() + n * hw * s.c + c;
            for (std::int64_t i = 0; i < hw; ++i) {
                dst[i * s.c] = src[i];
            }
        }
    }
    return t;
}

template <class T>
BasicTensor<T> from_tokens(const BasicTensor<T>& tokens, std::int64_t h, std::int64_t w)
{
    const Shape s = tokens.shape();
    if (s.c != 1 || s.h != h * w) {
        throw ShapeError("from_tokens: " + s.str() + " cannot be viewed as a " + std::to_string(h) + "x" +
                         std::to_string(w) + " map");
    }
    const std::int64_t d = s.w;
    const std::int64_t hw = h * w;
    BasicTensor<T> x({s.n, d, h, w});
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < d; ++c) {
            const T* src = tokens.raw() + n * hw * d + c;
            T* dst = x.plane(n, c);
            for (std::int64_t i = 0; i < hw; ++i) {
                dst[i] = src[i * d];
            }
        }
    }
    return x;
}

template <class T>
BasicTensor<T> sincos_pos2d(std::int64_t h, std::int64_t w, std::int64_t d_model, double temperature)
{
    if (d_model <= 0 || d_model % 4 != 0) {
        throw ConfigError("sincos_pos2d: d_model must be a positive multiple of 4, got " + std::to_string(d_model));
    }
    const std::int64_t pos_dim = d_model / 4;
    std::vector<double> omega(static_cast<std::size_t>(pos_dim));
    for (std::int64_t k = 0; k < pos_dim; ++k) {
        omega[static_cast<std::size_t>(k)] =
            1.0 / std::pow(temperature, static_cast<double>(k) / static_cast<double>(pos_dim));
    }
    BasicTensor<T> pos(token_shape(1, h * w, d_model));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            T* row = pos.raw() + (y * w + x) * d_model;
            for (std::int64_t k = 0; k < pos_dim; ++k) {
                const double ax = static_cast<double>(x) * omega[static_cast<std::size_t>(k)];
                const double ay = static_cast<double>(y) * omega[static_cast<std::size_t>(k)];
                row[k] = static_cast<T>(std::sin(ax));
                row[pos_dim + k] = static_cast<T>(std::cos(ax));
                row[2 * pos_dim + k] = static_cast<T>(std::sin(ay));
                row[3 * pos_dim + k] = static_cast<T>(std::cos(ay));
            }
        }
    }
    return pos;
}

namespace {

template <class T>
BasicTensor<T> add_pos(const BasicTensor<T>& a, const BasicTensor<T>& pos)
{
    const Shape s = a.shape();
    if (pos.shape() != token_shape(1, s.h, s.w)) {
        throw ShapeError("mhsa_layer: pos " + pos.shape().str() + " does not match tokens " + s.str());
    }
    BasicTensor<T> out(s);
    const std::int64_t per = s.h * s.w;
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t i = 0; i < per; ++i) {
            out[n * per + i] = a[n * per + i] + pos[i];
        }
    }
    flops::record(a.numel());
    return out;
}

} // namespace

template <class T>
BasicTensor<T> mhsa_layer(const BasicTensor<T>& tokens, const AttentionParams<T>& p, const BasicTensor<T>& pos,
                          MhsaCache<T>* cache)
{
    const Shape s = tokens.shape();
    const std::int64_t d = p.d_model();
    if (s.c != 1 || s.w != d) {
        throw ShapeError("mhsa_layer: tokens " + s.str() + " do not match d_model " + std::to_string(d));
    }
    if (p.heads < 1 || d % p.heads != 0) {
        throw ConfigError("mhsa_layer: d_model " + std::to_string(d) + " not divisible by heads " +
                          std::to_string(p.heads));
    }
    const std::int64_t seq = s.h;
    const std::int64_t heads = p.heads;
    const std::int64_t dh = d / heads;
    const T inv_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    MhsaCache<T> local;
    MhsaCache<T>& c = cache != nullptr ? *cache : local;
    c.x = tokens;
    c.a = layer_norm(tokens, p.ln1, &c.ln1);
    c.qk_in = add_pos(c.a, pos);
    c.q = linear_tokens(c.qk_in, p.q);
    c.k = linear_tokens(c.qk_in, p.k);
    c.v = linear_tokens(c.a, p.v);

    c.probs.assign(static_cast<std::size_t>(s.n * heads * seq * seq), T(0));
    std::vector<T> logits(static_cast<std::size_t>(seq * seq));
    c.attn_concat = BasicTensor<T>(s);
    for (std::int64_t n = 0; n < s.n; ++n) {
        const T* Q = c.q.raw() + n * seq * d;
        const T* K = c.k.raw() + n * seq * d;
        const T* V = c.v.raw() + n * seq * d;
        T* O = c.attn_concat.raw() + n * seq * d;
        for (std::int64_t hh = 0; hh < heads; ++hh) {
            const std::int64_t off = hh * dh;
            for (std::int64_t i = 0; i < seq; ++i) {
                for (std::int64_t j = 0; j < seq; ++j) {
                    T acc = 0;
                    for (std::int64_t e = 0; e < dh; ++e) {
                        acc += Q[i * d + off + e] * K[j * d + off + e];
                    }
                    logits[static_cast<std::size_t>(i * seq + j)] = acc * inv_scale;
                }
            }
            T* P = c.probs.data() + (n * heads + hh) * seq * seq;
            softmax_rows<T>(logits, seq, std::span<T>(P, static_cast<std::size_t>(seq * seq)));
            for (std::int64_t i = 0; i < seq; ++i) {
                for (std::int64_t j = 0; j < seq; ++j) {
                    const T pij = P[i * seq + j];
                    for (std::int64_t e = 0; e < dh; ++e) {
                        O[i * d + off + e] += pij * V[j * d + off + e];
                    }
                }
            }
        }
    }
    // QK^T and PV products plus the logit scaling
    flops::record(2 * s.n * seq * seq * d * 2 + s.n * heads * seq * seq);

    c.x1 = add(tokens, linear_tokens(c.attn_concat, p.o));
    c.b = layer_norm(c.x1, p.ln2, &c.ln2);
    c.h_pre = linear_tokens(c.b, p.ffn1);
    c.h_act = gelu(c.h_pre);
    return add(c.x1, linear_tokens(c.h_act, p.ffn2));
}

template <class T>
MhsaGrads<T> mhsa_backward(const MhsaCache<T>& c, const AttentionParams<T>& p, const BasicTensor<T>& grad_out)
{
    const Shape s = c.x.shape();
    require_same_shape(grad_out.shape(), s, "mhsa_backward");
    const std::int64_t d = p.d_model();
    const std::int64_t seq = s.h;
    const std::int64_t heads = p.heads;
    const std::int64_t dh = d / heads;
    const T inv_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    MhsaGrads<T> g;
    g.params.heads = p.heads;

    // FFN branch: y = x1 + ffn2(gelu(ffn1(LN2(x1))))
    auto g_ffn2 = linear_tokens_backward(c.h_act, p.ffn2, grad_out);
    BasicTensor<T> g_hpre = gelu_backward(c.h_pre, g_ffn2.x);
    auto g_ffn1 = linear_tokens_backward(c.b, p.ffn1, g_hpre);
    BasicTensor<T> g_x1 = layer_norm_backward(c.ln2, p.ln2, g_ffn1.x, g.params.ln2);
    add_inplace(g_x1, grad_out);
    g.params.ffn1 = std::move(g_ffn1.params);
    g.params.ffn2 = std::move(g_ffn2.params);

    // Attention branch: x1 = x + o(concat)
    auto g_o = linear_tokens_backward(c.attn_concat, p.o, g_x1);
    g.params.o = std::move(g_o.params);
    const BasicTensor<T>& dO = g_o.x;

    BasicTensor<T> dq(s), dk(s), dv(s);
    std::vector<T> dP(static_cast<std::size_t>(seq * seq));
    for (std::int64_t n = 0; n < s.n; ++n) {
        const std::int64_t base = n * seq * d;
        const T* Q = c.q.raw() + base;
        const T* K = c.k.raw() + base;
        const T* V = c.v.raw() + base;
        const T* gO = dO.raw() + base;
        T* gQ = dq.raw() + base;
        T* gK = dk.raw() + base;
        T* gV = dv.raw() + base;
        for (std::int64_t hh = 0; hh < heads; ++hh) {
            const std::int64_t off = hh * dh;
            const T* P = c.probs.data() + (n * heads + hh) * seq * seq;
            for (std::int64_t i = 0; i < seq; ++i) {
                for (std::int64_t j = 0; j < seq; ++j) {
                    T acc = 0;
                    for (std::int64_t e = 0; e < dh; ++e) {
                        acc += gO[i * d + off + e] * V[j * d + off + e];
                        gV[j * d + off + e] += P[i * seq + j] * gO[i * d + off + e];
                    }
                    dP[static_cast<std::size_t>(i * seq + j)] = acc;
                }
            }
            for (std::int64_t i = 0; i < seq; ++i) {
                T rowdot = 0;
                for (std::int64_t j = 0; j < seq; ++j) {
                    rowdot += P[i * seq + j] * dP[static_cast<std::size_t>(i * seq + j)];
                }
                for (std::int64_t j = 0; j < seq; ++j) {
                    const T ds = P[i * seq + j] * (dP[static_cast<std::size_t>(i * seq + j)] - rowdot) * inv_scale;
                    for (std::int64_t e = 0; e < dh; ++e) {
                        gQ[i * d + off + e] += ds * K[j * d + off + e];
                        gK[j * d + off + e] += ds * Q[i * d + off + e];
                    }
                }
            }
        }
    }

    auto g_q = linear_tokens_backward(c.qk_in, p.q, dq);
    auto g_k = linear_tokens_backward(c.qk_in, p.k, dk);
    auto g_v = linear_tokens_backward(c.a, p.v, dv);
    g.params.q = std::move(g_q.params);
    g.params.k = std::move(g_k.params);
    g.params.v = std::move(g_v.params);

    BasicTensor<T> g_a = std::move(g_q.x);
    add_inplace(g_a, g_k.x);
    add_inplace(g_a, g_v.x);
    g.x = layer_norm_backward(c.ln1, p.ln1, g_a, g.params.ln1);
    add_inplace(g.x, g_x1);
    return g;
}

template <class T>
void accumulate(AttentionParams<T>& a, const AttentionParams<T>& b)
{
    add_inplace(a.ln1.gamma, b.ln1.gamma);
    add_inplace(a.ln1.beta, b.ln1.beta);
    accumulate(a.q, b.q);
    accumulate(a.k, b.k);
    accumulate(a.v, b.v);
    accumulate(a.o, b.o);
    add_inplace(a.ln2.gamma, b.ln2.gamma);
    add_inplace(a.ln2.beta, b.ln2.beta);
    accumulate(a.ffn1, b.ffn1);
    accumulate(a.ffn2, b.ffn2);
}

#define LGI_INSTANTIATE(T)                                                                                         \
    template AttentionParams<T> make_attention<T>(std::int64_t, int, std::int64_t, Rng&);                          \
    template BasicTensor<T> layer_norm<T>(const BasicTensor<T>&, const LayerNormParams<T>&, LayerNormCache<T>*);    \
    template BasicTensor<T> layer_norm_backward<T>(const LayerNormCache<T>&, const LayerNormParams<T>&,            \
                                                   const BasicTensor<T>&, LayerNormParams<T>&);                    \
    template BasicTensor<T> gelu<T>(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> gelu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                        \
    template void softmax_rows<T>(std::span<const T>, std::int64_t, std::span<T>);                                 \
    template BasicTensor<T> to_tokens<T>(const BasicTensor<T>&);                                                   \
    template BasicTensor<T> from_tokens<T>(const BasicTensor<T>&, std::int64_t, std::int64_t);                     \
    template BasicTensor<T> sincos_pos2d<T>(std::int64_t, std::int64_t, std::int64_t, double);                     \
    template BasicTensor<T> mhsa_layer<T>(const BasicTensor<T>&, const AttentionParams<T>&, const BasicTensor<T>&,  \
                                          MhsaCache<T>*);                                                          \
    template MhsaGrads<T> mhsa_backward<T>(const MhsaCache<T>&, const AttentionParams<T>&, const BasicTensor<T>&); \
    template void accumulate<T>(AttentionParams<T>&, const AttentionParams<T>&);

LGI_INSTANTIATE(float)
LGI_INSTANTIATE(double)

} // namespace lgi
