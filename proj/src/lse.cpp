#include "lgi/lse.hpp"

#include "lgi/patch_merge.hpp"

namespace lgi {

template <class T>
LseParams<T> make_lse(std::int64_t c_low, std::int64_t c_high, std::int64_t split_k, int reduction,
                      GateActivation gate, Rng& rng)
{
    if (split_k <= 0 || split_k >= c_high) {
        throw ConfigError("lse: split_k " + std::to_string(split_k) + " must lie in (0, " + std::to_string(c_high) +
                          ")");
    }
    if (reduction != 2 && reduction != 4) {
        throw ConfigError("lse: reduction must be 2 or 4");
    }
    LseParams<T> p;
    p.pre_conv = make_conv<T>(c_low, c_low, 3, 1, rng);
    p.post_conv = make_conv<T>(c_low * reduction * reduction, split_k, 1, 1, rng);
    p.split_k = split_k;
    p.reduction = reduction;
    p.gate = gate;
    return p;
}

template <class T>
BasicTensor<T> lse_weights(const BasicTensor<T>& x_low, const LseParams<T>& p, LseCache<T>* cache)
{
    if (p.post_conv.out_channels() != p.split_k) {
        throw ConfigError("lse: post_conv produces " + std::to_string(p.post_conv.out_channels()) +
                          " channels but split_k is " + std::to_string(p.split_k));
    }
    BasicTensor<T> conv = conv2d(x_low, p.pre_conv);
    BasicTensor<T> merged = patch_merge(conv, p.reduction);
    BasicTensor<T> w_pre = conv2d(merged, p.post_conv);
    BasicTensor<T> x_w = p.gate == GateActivation::sigmoid ? sigmoid(w_pre) : w_pre;
    if (cache != nullptr) {
        cache->x_low = x_low;
        cache->conv = std::move(conv);
        cache->merged = std::move(merged);
        cache->w_pre = std::move(w_pre);
        cache->x_w = x_w;
    }
    return x_w;
}

template <class T>
BasicTensor<T> lse_forward(const BasicTensor<T>& x_low, const BasicTensor<T>& x_high, const LseParams<T>& p,
                           LseCache<T>* cache)
{
    const Shape lo = x_low.shape();
    const Shape hi = x_high.shape();
    if (lo.n != hi.n) {
        throw ShapeError("lse_forward: batch mismatch " + lo.str() + " vs " + hi.str());
    }
    if (lo.h != hi.h * p.reduction || lo.w != hi.w * p.reduction) {
        throw ShapeError("lse_forward: low " + lo.str() + " is not " + std::to_string(p.reduction) +
                         "x the spatial size of high " + hi.str());
    }
    if (p.split_k <= 0 || p.split_k >= hi.c) {
        throw ShapeError("lse_forward: split_k " + std::to_string(p.split_k) + " out of range for " + hi.str());
    }
    LseCache<T> local;
    LseCache<T>& c = cache != nullptr ? *cache : local;
    const BasicTensor<T> x_w = lse_weights(x_low, p, &c);
    auto [x_fuse, x_identity] = channel_split(x_high, p.split_k);
    BasicTensor<T> out = channel_concat(mul(x_w, x_fuse), x_identity);
    c.x_fuse = std::move(x_fuse);
    return out;
}

template <class T>
LseGrads<T> lse_backward(const LseCache<T>& c, const LseParams<T>& p, const BasicTensor<T>& grad_out)
{
    const Shape fs = c.x_fuse.shape();
    if (grad_out.n() != fs.n || grad_out.h() != fs.h || grad_out.w() != fs.w || grad_out.c() <= p.split_k) {
        throw ShapeError("lse_backward: grad_out " + grad_out.shape().str() + " does not match cached forward");
    }
    auto [g_enh, g_identity] = channel_split(grad_out, p.split_k);
    LseGrads<T> g;
    g.x_high = channel_concat(mul(g_enh, c.x_w), g_identity);
    BasicTensor<T> g_w = mul(g_enh, c.x_fuse);
    if (p.gate == GateActivation::sigmoid) {
        g_w = sigmoid_backward(c.x_w, g_w);
    }
    auto g_post = conv2d_backward(c.merged, p.post_conv, g_w);
    BasicTensor<T> g_conv = patch_unmerge(g_post.x, p.reduction);
    auto g_pre = conv2d_backward(c.x_low, p.pre_conv, g_conv);
    g.x_low = std::move(g_pre.x);
    g.params.pre_conv = std::move(g_pre.params);
    g.params.post_conv = std::move(g_post.params);
    g.params.split_k = p.split_k;
    g.params.reduction = p.reduction;
    g.params.gate = p.gate;
    return g;
}

#define LGI_INSTANTIATE(T)                                                                                         \
    template LseParams<T> make_lse<T>(std::int64_t, std::int64_t, std::int64_t, int, GateActivation, Rng&);        \
    template BasicTensor<T> lse_weights<T>(const BasicTensor<T>&, const LseParams<T>&, LseCache<T>*);              \
    template BasicTensor<T> lse_forward<T>(const BasicTensor<T>&, const BasicTensor<T>&, const LseParams<T>&,      \
                                           LseCache<T>*);                                                          \
    template LseGrads<T> lse_backward<T>(const LseCache<T>&, const LseParams<T>&, const BasicTensor<T>&);

LGI_INSTANTIATE(float)
LGI_INSTANTIATE(double)

} // namespace lgi
