#include "lgi/encoder.hpp"

#include <cmath>

#include "lgi/param_store.hpp"
#include "lgi/resize.hpp"

namespace lgi {

std::int64_t EncoderConfig::split_k() const
{
    return static_cast<std::int64_t>(std::llround(split_ratio * static_cast<double>(d_model)));
}

void EncoderConfig::validate() const
{
    if (d_model <= 0) {
        throw ConfigError("d_model must be positive, got " + std::to_string(d_model));
    }
    if (heads <= 0) {
        throw ConfigError("heads must be positive, got " + std::to_string(heads));
    }
    if (d_model % heads != 0) {
        throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by heads (" +
                          std::to_string(heads) + ")");
    }
    if (d_model % 4 != 0) {
        throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by 4");
    }
    if (d_ff <= 0) {
        throw ConfigError("d_ff must be positive, got " + std::to_string(d_ff));
    }
    if (aifi_depth < 1) {
        throw ConfigError("aifi_depth must be at least 1, got " + std::to_string(aifi_depth));
    }
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
        throw ConfigError("split_ratio must lie in (0, 1), got " + std::to_string(split_ratio));
    }
    const std::int64_t k = split_k();
    if (k <= 0 || k >= d_model) {
        throw ConfigError("split_ratio " + std::to_string(split_ratio) + " gives split_k " + std::to_string(k) +
                          ", outside (0, d_model)");
    }
}

template <class T>
void validate_pyramid(const FeaturePyramid<T>& pyr, std::int64_t d_model)
{
    const Shape a = pyr.s3.shape();
    const Shape b = pyr.s4.shape();
    const Shape c = pyr.s5.shape();
    const std::string shapes = a.str() + " / " + b.str() + " / " + c.str();
    if (a.n != b.n || a.n != c.n || a.n <= 0) {
        throw ShapeError("feature pyramid batch mismatch " + shapes);
    }
    if (a.c != d_model || b.c != d_model || c.c != d_model) {
        throw ShapeError("feature pyramid channels must equal d_model " + std::to_string(d_model) + ": " + shapes);
    }
    if (c.h <= 0 || c.w <= 0 || b.h != 2 * c.h || b.w != 2 * c.w || a.h != 4 * c.h || a.w != 4 * c.w) {
        throw ShapeError("feature pyramid levels must be 4x / 2x / 1x in spatial size: " + shapes);
    }
}

template <class T>
EncoderParams<T> make_encoder(const EncoderConfig& cfg, const Rng& rng)
{
    cfg.validate();
    const std::int64_t d = cfg.d_model;
    EncoderParams<T> p;
    if (cfg.enable_lse) {
        Rng r4 = rng.fork("lse.s4");
        Rng r5 = rng.fork("lse.s5");
        p.lse_s4 = make_lse<T>(d, d, cfg.split_k(), 2, cfg.gate_activation, r4);
        p.lse_s5 = make_lse<T>(d, d, cfg.split_k(), 4, cfg.gate_activation, r5);
    }
    for (int i = 0; i < cfg.aifi_depth; ++i) {
        Rng r = rng.fork("aifi." + std::to_string(i));
        p.aifi.push_back(make_attention<T>(d, cfg.heads, cfg.d_ff, r));
    }
    Rng rf = rng.fork("fusion");
    FusionParams<T>& f = p.fusion;
    f.lateral5 = make_conv<T>(d, d, 1, 1, rf);
    f.lateral4 = make_conv<T>(d, d, 1, 1, rf);
    f.td4 = make_rep_block<T>(d, d, true, rf);
    f.td3 = make_rep_block<T>(d, d, true, rf);
    f.down3 = make_conv<T>(d, d, 3, 2, rf);
    f.down4 = make_conv<T>(d, d, 3, 2, rf);
    f.bu4 = make_rep_block<T>(d, d, true, rf);
    f.bu5 = make_rep_block<T>(d, d, true, rf);
    if (cfg.enable_gii) {
        Rng rh = rng.fork("gii.hl");
        p.gii_hl = make_gii<T>(d, d, rh);
        if (cfg.gii_to_mid) {
            Rng rm = rng.fork("gii.hm");
            p.gii_hm = make_gii<T>(d, d, rm);
        }
    }
    return p;
}

template <class T>
void reparameterize_all(EncoderParams<T>& p)
{
    for (RepBlockParams<T>* r : {&p.fusion.td4, &p.fusion.td3, &p.fusion.bu4, &p.fusion.bu5}) {
        *r = reparameterize(*r);
    }
    if (p.gii_hl) p.gii_hl->rep = reparameterize(p.gii_hl->rep);
    if (p.gii_hm) p.gii_hm->rep = reparameterize(p.gii_hm->rep);
}

namespace {

void mix(std::uint64_t& h, std::uint64_t v)
{
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

template <class T>
void mix_mask(std::uint64_t& h, const BasicTensor<T>& pre)
{
    std::uint64_t word = 0;
    int bits = 0;
    for (T v : pre.data()) {
        word = (word << 1) | (v > T(0) ? 1U : 0U);
        if (++bits == 64) {
            mix(h, word);
            word = 0;
            bits = 0;
        }
    }
    mix(h, word);
    mix(h, static_cast<std::uint64_t>(pre.numel()));
}

} // namespace

template <class T>
std::uint64_t EncoderCache<T>::relu_signature() const
{
    std::uint64_t h = 0;
    for (const RepBlockCache<T>* r : {&td4, &td3, &bu4, &bu5}) {
        mix_mask(h, r->pre);
    }
    if (gii_hl) mix_mask(h, gii_hl->rep.pre);
    if (gii_hm) mix_mask(h, gii_hm->rep.pre);
    return h;
}

template <class T>
EncoderOutput<T> encoder_forward(const FeaturePyramid<T>& pyr, const EncoderParams<T>& params,
                                 const EncoderConfig& cfg, Mode mode, EncoderCache<T>* cache)
{
    cfg.validate();
    validate_pyramid(pyr, cfg.d_model);
    const std::int64_t h4 = pyr.s4.h(), w4 = pyr.s4.w();
    const std::int64_t h3 = pyr.s3.h(), w3 = pyr.s3.w();
    const std::int64_t h5 = pyr.s5.h(), w5 = pyr.s5.w();
    if (static_cast<int>(params.aifi.size()) != cfg.aifi_depth) {
        throw ConfigError("encoder params hold " + std::to_string(params.aifi.size()) +
                          " attention layers, config asks for " + std::to_string(cfg.aifi_depth));
    }

    // (1) local spatial enhancement
    BasicTensor<T> s4p, s5p;
    if (cfg.enable_lse) {
        if (!params.lse_s4 || !params.lse_s5) {
            throw ConfigError("enable_lse is set but the parameters contain no lse.* modules");
        }
        s4p = lse_forward(pyr.s3, pyr.s4, *params.lse_s4, cache ? &cache->lse_s4.emplace() : nullptr);
        s5p = lse_forward(pyr.s3, pyr.s5, *params.lse_s5, cache ? &cache->lse_s5.emplace() : nullptr);
    } else {
        s4p = pyr.s4;
        s5p = pyr.s5;
    }

    // (2) intra-scale attention on the top level
    const BasicTensor<T> pos = sincos_pos2d<T>(h5, w5, cfg.d_model);
    BasicTensor<T> tokens = to_tokens(s5p);
    if (cache) cache->aifi.resize(params.aifi.size());
    for (std::size_t i = 0; i < params.aifi.size(); ++i) {
        tokens = mhsa_layer(tokens, params.aifi[i], pos, cache ? &cache->aifi[i] : nullptr);
    }
    BasicTensor<T> s5a = from_tokens(tokens, h5, w5);

    // (3) cross-scale fusion
    const FusionParams<T>& f = params.fusion;
    BasicTensor<T> inner5 = conv2d(s5a, f.lateral5);
    BasicTensor<T> td4_out = rep_block(add(s4p, bilinear_resize(inner5, h4, w4)), f.td4, mode,
                                       cache ? &cache->td4 : nullptr);
    BasicTensor<T> inner4 = conv2d(td4_out, f.lateral4);
    BasicTensor<T> f_l0 =
        rep_block(add(pyr.s3, bilinear_resize(inner4, h3, w3)), f.td3, mode, cache ? &cache->td3 : nullptr);
    BasicTensor<T> f_m0 = rep_block(add(conv2d(f_l0, f.down3), inner4), f.bu4, mode, cache ? &cache->bu4 : nullptr);
    BasicTensor<T> f_h0 = rep_block(add(conv2d(f_m0, f.down4), inner5), f.bu5, mode, cache ? &cache->bu5 : nullptr);

    // (4) global information injection
    EncoderOutput<T> out;
    out.levels.s3 = f_l0;
    out.levels.s4 = f_m0;
    out.levels.s5 = f_h0;
    if (cfg.enable_gii) {
        if (!params.gii_hl) {
            throw ConfigError("enable_gii is set but the parameters contain no gii.hl module");
        }
        out.levels.s3 = gii_forward(f_l0, f_h0, *params.gii_hl, mode, cache ? &cache->gii_hl.emplace() : nullptr);
        if (cfg.gii_to_mid) {
            if (!params.gii_hm) {
                throw ConfigError("gii_to_mid is set but the parameters contain no gii.hm module");
            }
            out.levels.s4 =
                gii_forward(f_m0, f_h0, *params.gii_hm, mode, cache ? &cache->gii_hm.emplace() : nullptr);
        }
    }

    // (5) token concatenation
    out.tokens = concat_fuse(out.levels.s3, out.levels.s4, out.levels.s5);

    if (cache) {
        cache->in = pyr;
        cache->s4p = std::move(s4p);
        cache->s5p = std::move(s5p);
        cache->s5a = std::move(s5a);
        cache->inner5 = std::move(inner5);
        cache->inner4 = std::move(inner4);
        cache->td4_out = std::move(td4_out);
        cache->f_l0 = std::move(f_l0);
        cache->f_m0 = std::move(f_m0);
        cache->f_h0 = std::move(f_h0);
        cache->out = out.levels;
    }
    return out;
}

template <class T>
EncoderGrads<T> encoder_backward(const EncoderCache<T>& c, const EncoderParams<T>& params, const EncoderConfig& cfg,
                                 const BasicTensor<T>& grad_tokens)
{
    const Shape shapes[] = {c.out.s3.shape(), c.out.s4.shape(), c.out.s5.shape()};
    std::vector<BasicTensor<T>> lv = concat_fuse_backward<T>(grad_tokens, shapes);
    BasicTensor<T> g_fl = std::move(lv[0]);
    BasicTensor<T> g_fm = std::move(lv[1]);
    BasicTensor<T> g_fh = std::move(lv[2]);

    EncoderGrads<T> g;
    g.params = zeros_like_params(params);
    const FusionParams<T>& f = params.fusion;
    FusionParams<T>& gf = g.params.fusion;

    if (cfg.enable_gii) {
        if (cfg.gii_to_mid) {
            auto gm = gii_backward(*c.gii_hm, *params.gii_hm, g_fm);
            g_fm = std::move(gm.x_low);
            add_inplace(g_fh, gm.x_high);
            *g.params.gii_hm = std::move(gm.params);
        }
        auto gl = gii_backward(*c.gii_hl, *params.gii_hl, g_fl);
        g_fl = std::move(gl.x_low);
        add_inplace(g_fh, gl.x_high);
        *g.params.gii_hl = std::move(gl.params);
    }

    // F_H = bu5(down4(F_M) + inner5)
    auto g_bu5 = rep_block_backward(c.bu5, f.bu5, g_fh);
    gf.bu5 = std::move(g_bu5.params);
    BasicTensor<T> g_inner5 = g_bu5.x;
    auto g_down4 = conv2d_backward(c.f_m0, f.down4, g_bu5.x);
    gf.down4 = std::move(g_down4.params);
    add_inplace(g_fm, g_down4.x);

    // F_M = bu4(down3(F_L) + inner4)
    auto g_bu4 = rep_block_backward(c.bu4, f.bu4, g_fm);
    gf.bu4 = std::move(g_bu4.params);
    BasicTensor<T> g_inner4 = g_bu4.x;
    auto g_down3 = conv2d_backward(c.f_l0, f.down3, g_bu4.x);
    gf.down3 = std::move(g_down3.params);
    add_inplace(g_fl, g_down3.x);

    // F_L = td3(s3 + up(inner4))
    auto g_td3 = rep_block_backward(c.td3, f.td3, g_fl);
    gf.td3 = std::move(g_td3.params);
    BasicTensor<T> g_s3 = g_td3.x;
    add_inplace(g_inner4, bilinear_resize_backward(g_td3.x, c.inner4.h(), c.inner4.w()));

    // inner4 = lateral4(td4(s4' + up(inner5)))
    auto g_lat4 = conv2d_backward(c.td4_out, f.lateral4, g_inner4);
    gf.lateral4 = std::move(g_lat4.params);
    auto g_td4 = rep_block_backward(c.td4, f.td4, g_lat4.x);
    gf.td4 = std::move(g_td4.params);
    BasicTensor<T> g_s4p = g_td4.x;
    add_inplace(g_inner5, bilinear_resize_backward(g_td4.x, c.inner5.h(), c.inner5.w()));

    // inner5 = lateral5(s5a)
    auto g_lat5 = conv2d_backward(c.s5a, f.lateral5, g_inner5);
    gf.lateral5 = std::move(g_lat5.params);

    // attention
    BasicTensor<T> g_tok = to_tokens(g_lat5.x);
    for (std::size_t i = params.aifi.size(); i-- > 0;) {
        auto ga = mhsa_backward(c.aifi[i], params.aifi[i], g_tok);
        g_tok = std::move(ga.x);
        g.params.aifi[i] = std::move(ga.params);
    }
    BasicTensor<T> g_s5p = from_tokens(g_tok, c.s5p.h(), c.s5p.w());

    if (cfg.enable_lse) {
        auto g4 = lse_backward(*c.lse_s4, *params.lse_s4, g_s4p);
        auto g5 = lse_backward(*c.lse_s5, *params.lse_s5, g_s5p);
        add_inplace(g_s3, g4.x_low);
        add_inplace(g_s3, g5.x_low);
        g.inputs.s4 = std::move(g4.x_high);
        g.inputs.s5 = std::move(g5.x_high);
        *g.params.lse_s4 = std::move(g4.params);
        *g.params.lse_s5 = std::move(g5.params);
    } else {
        g.inputs.s4 = std::move(g_s4p);
        g.inputs.s5 = std::move(g_s5p);
    }
    g.inputs.s3 = std::move(g_s3);
    return g;
}

template <class T>
BasicTensor<T> concat_fuse(std::span<const BasicTensor<T>> levels)
{
    if (levels.empty()) {
        throw ShapeError("concat_fuse: no levels");
    }
    const Shape ref = levels[0].shape();
    std::int64_t total = 0;
    for (const auto& l : levels) {
        if (l.n() != ref.n || l.c() != ref.c) {
            throw ShapeError("concat_fuse: batch/channel mismatch " + ref.str() + " vs " + l.shape().str());
        }
        total += l.h() * l.w();
    }
    BasicTensor<T> out(token_shape(ref.n, total, ref.c));
    for (std::int64_t n = 0; n < ref.n; ++n) {
        T* dst = out.raw() + n * total * ref.c;
        for (const auto& l : levels) {
            const std::int64_t hw = l.h() * l.w();
            for (std::int64_t ch = 0; ch < ref.c; ++ch) {
                const T* src = l.plane(n, ch);
                for (std::int64_t t = 0; t < hw; ++t) {
                    dst[t * ref.c + ch] = src[t];
                }
            }
            dst += hw * ref.c;
        }
    }
    return out;
}

template <class T>
std::vector<BasicTensor<T>> concat_fuse_backward(const BasicTensor<T>& grad_tokens, std::span<const Shape> shapes)
{
    std::int64_t total = 0;
    for (const Shape& s : shapes) {
        total += s.h * s.w;
    }
    if (shapes.empty() || grad_tokens.shape() != token_shape(shapes[0].n, total, shapes[0].c)) {
        throw ShapeError("concat_fuse_backward: gradient " + grad_tokens.shape().str() +
                         " does not match the level shapes");
    }
    std::vector<BasicTensor<T>> out;
    for (const Shape& s : shapes) {
        out.emplace_back(s);
    }
    const std::int64_t c = shapes[0].c;
    for (std::int64_t n = 0; n < shapes[0].n; ++n) {
        const T* src = grad_tokens.raw() + n * total * c;
        for (auto& l : out) {
            const std::int64_t hw = l.h() * l.w();
            for (std::int64_t ch = 0; ch < c; ++ch) {
                T* dst = l.plane(n, ch);
                for (std::int64_t t = 0; t < hw; ++t) {
                    dst[t] = src[t * c + ch];
                }
            }
            src += hw * c;
        }
    }
    return out;
}

#define LGI_INSTANTIATE(T)                                                                                         \
    template void validate_pyramid<T>(const FeaturePyramid<T>&, std::int64_t);                                     \
    template EncoderParams<T> make_encoder<T>(const EncoderConfig&, const Rng&);                                   \
    template void reparameterize_all<T>(EncoderParams<T>&);                                                        \
    template struct EncoderCache<T>;                                                                               \
    template EncoderOutput<T> encoder_forward<T>(const FeaturePyramid<T>&, const EncoderParams<T>&,                \
                                                 const EncoderConfig&, Mode, EncoderCache<T>*);                    \
    template EncoderGrads<T> encoder_backward<T>(const EncoderCache<T>&, const EncoderParams<T>&,                  \
                                                 const EncoderConfig&, const BasicTensor<T>&);                     \
    template BasicTensor<T> concat_fuse<T>(std::span<const BasicTensor<T>>);                                       \
    template std::vector<BasicTensor<T>> concat_fuse_backward<T>(const BasicTensor<T>&, std::span<const Shape>);

LGI_INSTANTIATE(float)
LGI_INSTANTIATE(double)

} // namespace lgi
