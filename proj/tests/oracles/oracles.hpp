#pragma once

// Naive scalar reference implementations used as test oracles. They use
// library tensors only as storage (shape + at()), never library math.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lgi/attention.hpp"
#include "lgi/conv.hpp"
#include "lgi/encoder.hpp"
#include "lgi/gii.hpp"
#include "lgi/lse.hpp"
#include "lgi/rep_block.hpp"

namespace oracle {

using lgi::TensorD;

inline TensorD conv(const TensorD& x, const TensorD& w, const TensorD& b, int stride, int pad)
{
    const std::int64_t n = x.n(), ci = x.c(), h = x.h(), wd = x.w();
    const std::int64_t co = w.n(), k = w.h();
    const std::int64_t ho = (h + 2 * pad - k) / stride + 1;
    const std::int64_t wo = (wd + 2 * pad - k) / stride + 1;
    TensorD y({n, co, ho, wo});
    for (std::int64_t b0 = 0; b0 < n; ++b0)
        for (std::int64_t o = 0; o < co; ++o)
            for (std::int64_t yy = 0; yy < ho; ++yy)
                for (std::int64_t xx = 0; xx < wo; ++xx) {
                    double acc = b[o];
                    for (std::int64_t c = 0; c < ci; ++c)
                        for (std::int64_t ky = 0; ky < k; ++ky)
                            for (std::int64_t kx = 0; kx < k; ++kx) {
                                const std::int64_t iy = yy * stride - pad + ky;
                                const std::int64_t ix = xx * stride - pad + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += w.at(o, c, ky, kx) * x.at(b0, c, iy, ix);
                            }
                    y.at(b0, o, yy, xx) = acc;
                }
    return y;
}

inline TensorD conv(const TensorD& x, const lgi::ConvParams<double>& p)
{
    return conv(x, p.weight, p.bias, p.stride, p.padding);
}

inline TensorD relu(const TensorD& x)
{
    TensorD y(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline TensorD plus(const TensorD& a, const TensorD& b)
{
    TensorD y(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
    return y;
}

// Output channel block g = i*r + j holds x[:, :, i::r, j::r].
inline TensorD patch_merge(const TensorD& x, int r)
{
    const std::int64_t c = x.c();
    TensorD y({x.n(), c * r * r, x.h() / r, x.w() / r});
    for (std::int64_t n = 0; n < x.n(); ++n)
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j)
                for (std::int64_t ch = 0; ch < c; ++ch)
                    for (std::int64_t yy = 0; yy < y.h(); ++yy)
                        for (std::int64_t xx = 0; xx < y.w(); ++xx)
                            y.at(n, (i * r + j) * c + ch, yy, xx) = x.at(n, ch, yy * r + i, xx * r + j);
    return y;
}

// Half-pixel source coordinate, clamped like the common framework convention.
inline double bilinear_sample(const TensorD& x, std::int64_t n, std::int64_t c, std::int64_t oy, std::int64_t ox,
                              std::int64_t out_h, std::int64_t out_w)
{
    auto axis = [](std::int64_t o, std::int64_t in, std::int64_t out, std::int64_t& i0, std::int64_t& i1, double& t) {
        double s = (o + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
        if (s < 0.0) s = 0.0;
        i0 = static_cast<std::int64_t>(std::floor(s));
        if (i0 > in - 1) i0 = in - 1;
        i1 = i0 + 1 < in ? i0 + 1 : in - 1;
        t = s - static_cast<double>(i0);
    };
    std::int64_t y0, y1, x0, x1;
    double ty, tx;
    axis(oy, x.h(), out_h, y0, y1, ty);
    axis(ox, x.w(), out_w, x0, x1, tx);
    const double top = (1 - tx) * x.at(n, c, y0, x0) + tx * x.at(n, c, y0, x1);
    const double bot = (1 - tx) * x.at(n, c, y1, x0) + tx * x.at(n, c, y1, x1);
    return (1 - ty) * top + ty * bot;
}

inline TensorD resize(const TensorD& x, std::int64_t out_h, std::int64_t out_w)
{
    if (out_h == x.h() && out_w == x.w()) return x;
    TensorD y({x.n(), x.c(), out_h, out_w});
    for (std::int64_t n = 0; n < x.n(); ++n)
        for (std::int64_t c = 0; c < x.c(); ++c)
            for (std::int64_t oy = 0; oy < out_h; ++oy)
                for (std::int64_t ox = 0; ox < out_w; ++ox) y.at(n, c, oy, ox) = bilinear_sample(x, n, c, oy, ox, out_h, out_w);
    return y;
}

inline TensorD rep_block(const TensorD& x, const lgi::RepBlockParams<double>& p)
{
    TensorD pre = plus(conv(x, p.branch3x3), conv(x, p.branch1x1));
    if (p.use_identity) pre = plus(pre, x);
    return relu(pre);
}

// ---- token-level helpers: tokens are (n, 1, seq, d) -------------------------------

inline TensorD layer_norm(const TensorD& t, const lgi::LayerNormParams<double>& p)
{
    const std::int64_t rows = t.n() * t.h(), d = t.w();
    TensorD y(t.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mean += t[r * d + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) var += (t[r * d + j] - mean) * (t[r * d + j] - mean);
        var /= static_cast<double>(d);
        for (std::int64_t j = 0; j < d; ++j)
            y[r * d + j] = (t[r * d + j] - mean) / std::sqrt(var + 1e-5) * p.gamma[j] + p.beta[j];
    }
    return y;
}

// y[row, o] = b[o] + sum_i W[o, i] x[row, i]
inline TensorD linear(const TensorD& t, const lgi::ConvParams<double>& p)
{
    const std::int64_t rows = t.n() * t.h(), din = t.w(), dout = p.weight.n();
    TensorD y({t.n(), 1, t.h(), dout});
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t o = 0; o < dout; ++o) {
            double acc = p.bias[o];
            for (std::int64_t i = 0; i < din; ++i) acc += p.weight[o * din + i] * t[r * din + i];
            y[r * dout + o] = acc;
        }
    return y;
}

inline TensorD gelu(const TensorD& t)
{
    TensorD y(t.shape());
    for (std::int64_t i = 0; i < t.numel(); ++i) y[i] = 0.5 * t[i] * (1.0 + std::erf(t[i] / std::sqrt(2.0)));
    return y;
}

inline TensorD to_tokens(const TensorD& x)
{
    TensorD t({x.n(), 1, x.h() * x.w(), x.c()});
    for (std::int64_t n = 0; n < x.n(); ++n)
        for (std::int64_t c = 0; c < x.c(); ++c)
            for (std::int64_t yy = 0; yy < x.h(); ++yy)
                for (std::int64_t xx = 0; xx < x.w(); ++xx) t.at(n, 0, yy * x.w() + xx, c) = x.at(n, c, yy, xx);
    return t;
}

inline TensorD from_tokens(const TensorD& t, std::int64_t h, std::int64_t w)
{
    TensorD x({t.n(), t.w(), h, w});
    for (std::int64_t n = 0; n < t.n(); ++n)
        for (std::int64_t c = 0; c < t.w(); ++c)
            for (std::int64_t yy = 0; yy < h; ++yy)
                for (std::int64_t xx = 0; xx < w; ++xx) x.at(n, c, yy, xx) = t.at(n, 0, yy * w + xx, c);
    return x;
}

// Row y*w + x: [sin(x om_k) | cos(x om_k) | sin(y om_k) | cos(y om_k)], om_k = 10000^(-k/(d/4)).
inline TensorD sincos(std::int64_t h, std::int64_t w, std::int64_t d)
{
    const std::int64_t q = d / 4;
    TensorD pos({1, 1, h * w, d});
    for (std::int64_t yy = 0; yy < h; ++yy)
        for (std::int64_t xx = 0; xx < w; ++xx)
            for (std::int64_t k = 0; k < q; ++k) {
                const double om = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(q));
                const std::int64_t row = yy * w + xx;
                pos.at(0, 0, row, k) = std::sin(xx * om);
                pos.at(0, 0, row, q + k) = std::cos(xx * om);
                pos.at(0, 0, row, 2 * q + k) = std::sin(yy * om);
                pos.at(0, 0, row, 3 * q + k) = std::cos(yy * om);
            }
    return pos;
}

// Pre-norm layer: x1 = x + O(attn(Q, K from LN1(x) + pos; V from LN1(x))), y = x1 + FFN(LN2(x1)).
inline TensorD mhsa(const TensorD& x, const lgi::AttentionParams<double>& p, const TensorD& pos)
{
    const std::int64_t n = x.n(), seq = x.h(), d = x.w(), heads = p.heads, dh = d / heads;
    const TensorD a = layer_norm(x, p.ln1);
    TensorD qk_in(a.shape());
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t i = 0; i < seq * d; ++i) qk_in[b * seq * d + i] = a[b * seq * d + i] + pos[i];
    const TensorD q = linear(qk_in, p.q), k = linear(qk_in, p.k), v = linear(a, p.v);
    TensorD cat(x.shape());
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t hh = 0; hh < heads; ++hh)
            for (std::int64_t i = 0; i < seq; ++i) {
                std::vector<double> logit(static_cast<std::size_t>(seq));
                double mx = -1e300;
                for (std::int64_t j = 0; j < seq; ++j) {
                    double s = 0.0;
                    for (std::int64_t e = 0; e < dh; ++e) s += q.at(b, 0, i, hh * dh + e) * k.at(b, 0, j, hh * dh + e);
                    logit[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
                    mx = std::max(mx, logit[static_cast<std::size_t>(j)]);
                }
                double z = 0.0;
                for (double& l : logit) z += (l = std::exp(l - mx));
                for (std::int64_t e = 0; e < dh; ++e) {
                    double acc = 0.0;
                    for (std::int64_t j = 0; j < seq; ++j) acc += logit[static_cast<std::size_t>(j)] / z * v.at(b, 0, j, hh * dh + e);
                    cat.at(b, 0, i, hh * dh + e) = acc;
                }
            }
    const TensorD x1 = plus(x, linear(cat, p.o));
    const TensorD f = linear(gelu(linear(layer_norm(x1, p.ln2), p.ffn1)), p.ffn2);
    return plus(x1, f);
}

// ---- modules, written straight from their defining formulas ----------------------

// x_w = post(PatchMerge(pre(x_L), r)) [sigmoid]; out = concat(x_w * x_H[:k], x_H[k:]).
inline TensorD lse(const TensorD& xl, const TensorD& xh, const lgi::LseParams<double>& p)
{
    const std::int64_t n = xh.n(), ch = xh.c(), hh = xh.h(), wh = xh.w(), cl = xl.c();
    const int r = p.reduction;
    const std::int64_t k = p.split_k;
    const TensorD& w1 = p.pre_conv.weight;
    const TensorD& w2 = p.post_conv.weight;
    // pre_conv at full low resolution
    TensorD a({n, cl, xl.h(), xl.w()});
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t o = 0; o < cl; ++o)
            for (std::int64_t y = 0; y < xl.h(); ++y)
                for (std::int64_t x = 0; x < xl.w(); ++x) {
                    double s = p.pre_conv.bias[o];
                    for (std::int64_t c = 0; c < cl; ++c)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                const std::int64_t yy = y + dy, xx = x + dx;
                                if (yy >= 0 && yy < xl.h() && xx >= 0 && xx < xl.w())
                                    s += w1.at(o, c, dy + 1, dx + 1) * xl.at(b, c, yy, xx);
                            }
                    a.at(b, o, y, x) = s;
                }
    TensorD out(xh.shape());
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t y = 0; y < hh; ++y)
            for (std::int64_t x = 0; x < wh; ++x) {
                for (std::int64_t o = 0; o < k; ++o) {
                    double s = p.post_conv.bias[o];
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < r; ++j)
                            for (std::int64_t c = 0; c < cl; ++c)
                                s += w2.at(o, (i * r + j) * cl + c, 0, 0) * a.at(b, c, y * r + i, x * r + j);
                    if (p.gate == lgi::GateActivation::sigmoid) s = sigmoid(s);
                    out.at(b, o, y, x) = s * xh.at(b, o, y, x);
                }
                for (std::int64_t o = k; o < ch; ++o) out.at(b, o, y, x) = xh.at(b, o, y, x);
            }
    return out;
}

// W = up(sigmoid(Wc x_H)); I = up(Ic x_H); out = RepBlock(Lc(x_L) * W + I).
inline TensorD gii(const TensorD& xl, const TensorD& xh, const lgi::GiiParams<double>& p)
{
    const std::int64_t n = xl.n(), cl = xl.c(), hl = xl.h(), wl = xl.w();
    auto pointwise = [](const TensorD& x, const lgi::ConvParams<double>& c, std::int64_t b, std::int64_t o,
                        std::int64_t y, std::int64_t xx) {
        double s = c.bias[o];
        for (std::int64_t i = 0; i < x.c(); ++i) s += c.weight.at(o, i, 0, 0) * x.at(b, i, y, xx);
        return s;
    };
    TensorD wmap({n, cl, xh.h(), xh.w()});
    TensorD imap({n, cl, xh.h(), xh.w()});
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t o = 0; o < cl; ++o)
            for (std::int64_t y = 0; y < xh.h(); ++y)
                for (std::int64_t x = 0; x < xh.w(); ++x) {
                    wmap.at(b, o, y, x) = sigmoid(pointwise(xh, p.weight_conv, b, o, y, x));
                    imap.at(b, o, y, x) = pointwise(xh, p.info_conv, b, o, y, x);
                }
    TensorD fuse({n, cl, hl, wl});
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t o = 0; o < cl; ++o)
            for (std::int64_t y = 0; y < hl; ++y)
                for (std::int64_t x = 0; x < wl; ++x) {
                    const double wv = bilinear_sample(wmap, b, o, y, x, hl, wl);
                    const double iv = bilinear_sample(imap, b, o, y, x, hl, wl);
                    fuse.at(b, o, y, x) = pointwise(xl, p.low_conv, b, o, y, x) * wv + iv;
                }
    return rep_block(fuse, p.rep);
}

inline TensorD concat_tokens(const TensorD& l, const TensorD& m, const TensorD& h)
{
    const std::int64_t d = l.c();
    const std::int64_t total = l.h() * l.w() + m.h() * m.w() + h.h() * h.w();
    TensorD t({l.n(), 1, total, d});
    for (std::int64_t b = 0; b < l.n(); ++b) {
        std::int64_t row = 0;
        for (const TensorD* lv : {&l, &m, &h})
            for (std::int64_t y = 0; y < lv->h(); ++y)
                for (std::int64_t x = 0; x < lv->w(); ++x, ++row)
                    for (std::int64_t c = 0; c < d; ++c) t.at(b, 0, row, c) = lv->at(b, c, y, x);
    }
    return t;
}

struct EncoderResult {
    TensorD tokens, fl, fm, fh;
};

// LSE -> AIFI on S5 -> top-down/bottom-up fusion -> GII -> token concat.
inline EncoderResult encoder(const lgi::FeaturePyramid<double>& pyr, const lgi::EncoderParams<double>& p,
                             const lgi::EncoderConfig& cfg)
{
    TensorD s4 = pyr.s4, s5 = pyr.s5;
    if (cfg.enable_lse) {
        s4 = lse(pyr.s3, pyr.s4, *p.lse_s4);
        s5 = lse(pyr.s3, pyr.s5, *p.lse_s5);
    }
    const TensorD pos = sincos(s5.h(), s5.w(), s5.c());
    TensorD tok = to_tokens(s5);
    for (const auto& layer : p.aifi) tok = mhsa(tok, layer, pos);
    const TensorD s5a = from_tokens(tok, s5.h(), s5.w());
    const auto& f = p.fusion;
    const TensorD inner5 = conv(s5a, f.lateral5);
    const TensorD td4 = rep_block(plus(s4, resize(inner5, s4.h(), s4.w())), f.td4);
    const TensorD inner4 = conv(td4, f.lateral4);
    TensorD fl = rep_block(plus(pyr.s3, resize(inner4, pyr.s3.h(), pyr.s3.w())), f.td3);
    TensorD fm = rep_block(plus(conv(fl, f.down3), inner4), f.bu4);
    const TensorD fh = rep_block(plus(conv(fm, f.down4), inner5), f.bu5);
    if (cfg.enable_gii) {
        fl = gii(fl, fh, *p.gii_hl);
        if (cfg.gii_to_mid) fm = gii(fm, fh, *p.gii_hm);
    }
    return {concat_tokens(fl, fm, fh), fl, fm, fh};
}

inline double max_rel_diff(const TensorD& a, const TensorD& b)
{
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double den = std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
        m = std::max(m, std::abs(a[i] - b[i]) / den);
    }
    return m;
}

inline double max_abs_diff(const TensorD& a, const TensorD& b)
{
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace oracle
