#include "lgi/gii.hpp"

#include "lgi/resize.hpp"

namespace lgi {

template <class T>
GiiParams<T> make_gii(std::int64_t c_low, std::int64_t c_high, Rng& rng)
{
    GiiParams<T> p;
    p.weight_conv = make_conv<T>(c_high, c_low, 1, 1, rng);
    p.info_conv = make_conv<T>(c_high, c_low, 1, 1, rng);
    p.low_conv = make_conv<T>(c_low, c_low, 1, 1, rng);
    p.rep = make_rep_block<T>(c_low, c_low, true, rng);
    return p;
}

template <class T>
BasicTensor<T> gii_forward(const BasicTensor<T>& x_low, const BasicTensor<T>& x_high, const GiiParams<T>& p,
                           Mode mode, GiiCache<T>* cache)
{
    const Shape lo = x_low.shape();
    const Shape hi = x_high.shape();
    if (lo.n != hi.n) {
        throw ShapeError("gii_forward: batch mismatch " + lo.str() + " vs " + hi.str());
    }
    if (hi.h > lo.h || hi.w > lo.w) {
        throw ShapeError("gii_forward: high-level map " + hi.str() + " is larger than low-level map " + lo.str());
    }
    const std::int64_t c_low = p.low_conv.out_channels();
    if (p.weight_conv.out_channels() != c_low || p.info_conv.out_channels() != c_low) {
        throw ConfigError("gii: weight/info/low convs disagree on output width");
    }
    if (mode == Mode::deploy && !p.rep.fused) {
        throw StateError("gii_forward: deploy mode requires a reparameterized RepBlock");
    }

    BasicTensor<T> w_sig = sigmoid(conv2d(x_high, p.weight_conv));
    BasicTensor<T> w_up = bilinear_resize(w_sig, lo.h, lo.w);
    BasicTensor<T> info = bilinear_resize(conv2d(x_high, p.info_conv), lo.h, lo.w);
    BasicTensor<T> low = conv2d(x_low, p.low_conv);
    BasicTensor<T> fuse = add(mul(low, w_up), info);
    RepBlockCache<T>* rep_cache = cache != nullptr ? &cache->rep : nullptr;
    BasicTensor<T> out = rep_block(fuse, p.rep, mode, rep_cache);
    if (cache != nullptr) {
        cache->x_low = x_low;
        cache->x_high = x_high;
        cache->w_sig = std::move(w_sig);
        cache->w_up = std::move(w_up);
        cache->low = std::move(low);
    }
    return out;
}

template <class T>
GiiGrads<T> gii_backward(const GiiCache<T>& c, const GiiParams<T>& p, const BasicTensor<T>& grad_out)
{
    require_same_shape(grad_out.shape(), c.low.shape(), "gii_backward");
    auto g_rep = rep_block_backward(c.rep, p.rep, grad_out);
    const BasicTensor<T>& g_fuse = g_rep.x;
    const Shape hi = c.x_high.shape();

    BasicTensor<T> g_low = mul(g_fuse, c.w_up);
    BasicTensor<T> g_w_up = mul(g_fuse, c.low);
    BasicTensor<T> g_info_pre = bilinear_resize_backward(g_fuse, hi.h, hi.w);
    BasicTensor<T> g_w_pre = sigmoid_backward(c.w_sig, bilinear_resize_backward(g_w_up, hi.h, hi.w));

    auto g_lc = conv2d_backward(c.x_low, p.low_conv, g_low);
    auto g_ic = conv2d_backward(c.x_high, p.info_conv, g_info_pre);
    auto g_wc = conv2d_backward(c.x_high, p.weight_conv, g_w_pre);

    GiiGrads<T> g;
    g.x_low = std::move(g_lc.x);
    g.x_high = std::move(g_ic.x);
    add_inplace(g.x_high, g_wc.x);
    g.params.weight_conv = std::move(g_wc.params);
    g.params.info_conv = std::move(g_ic.params);
    g.params.low_conv = std::move(g_lc.params);
    g.params.rep = std::move(g_rep.params);
    return g;
}

#define LGI_INSTANTIATE(T)                                                                                         \
    template GiiParams<T> make_gii<T>(std::int64_t, std::int64_t, Rng&);                                           \
    template BasicTensor<T> gii_forward<T>(const BasicTensor<T>&, const BasicTensor<T>&, const GiiParams<T>&,      \
                                           Mode, GiiCache<T>*);                                                    \
    template GiiGrads<T> gii_backward<T>(const GiiCache<T>&, const GiiParams<T>&, const BasicTensor<T>&);

LGI_INSTANTIATE(float)
LGI_INSTANTIATE(double)

} // namespace lgi
