#include "lgi/rep_block.hpp"

namespace lgi {

namespace {

template <class T>
void check_identity(const RepBlockParams<T>& p)
{
    if (p.use_identity && p.in_channels() != p.out_channels()) {
        throw ConfigError("rep_block: identity branch needs c_in == c_out, got " + std::to_string(p.in_channels()) +
                          " -> " + std::to_string(p.out_channels()));
    }
}

} // namespace

template <class T>
RepBlockParams<T> make_rep_block(std::int64_t c_in, std::int64_t c_out, bool use_identity, Rng& rng)
{
    RepBlockParams<T> p;
    p.branch3x3 = make_conv<T>(c_in, c_out, 3, 1, rng);
    p.branch1x1 = make_conv<T>(c_in, c_out, 1, 1, rng);
    p.use_identity = use_identity;
    check_identity(p);
    return p;
}

template <class T>
BasicTensor<T> rep_block(const BasicTensor<T>& x, const RepBlockParams<T>& p, Mode mode, RepBlockCache<T>* cache)
{
    check_identity(p);
    BasicTensor<T> pre;
    if (mode == Mode::deploy) {
        if (!p.fused) {
            throw StateError("rep_block: deploy mode requires reparameterize() first");
        }
        pre = conv2d(x, *p.fused);
    } else {
        pre = add(conv2d(x, p.branch3x3), conv2d(x, p.branch1x1));
        if (p.use_identity) {
            pre = add(pre, x);
        }
    }
    BasicTensor<T> out = relu(pre);
    if (cache != nullptr) {
        cache->x = x;
        cache->pre = std::move(pre);
    }
    return out;
}

template <class T>
RepBlockGrads<T> rep_block_backward(const RepBlockCache<T>& cache, const RepBlockParams<T>& p,
                                    const BasicTensor<T>& grad_out)
{
    const BasicTensor<T> g_pre = relu_backward(cache.pre, grad_out);
    auto g3 = conv2d_backward(cache.x, p.branch3x3, g_pre);
    auto g1 = conv2d_backward(cache.x, p.branch1x1, g_pre);
    RepBlockGrads<T> g;
    g.x = std::move(g3.x);
    add_inplace(g.x, g1.x);
    if (p.use_identity) {
        add_inplace(g.x, g_pre);
    }
    g.params.branch3x3 = std::move(g3.params);
    g.params.branch1x1 = std::move(g1.params);
    g.params.use_identity = p.use_identity;
    return g;
}

template <class T>
RepBlockParams<T> reparameterize(const RepBlockParams<T>& p)
{
    check_identity(p);
    if (p.branch3x3.kernel() != 3 || p.branch1x1.kernel() != 1 || p.branch3x3.stride != 1 ||
        p.branch1x1.stride != 1) {
        throw ConfigError("reparameterize: expects a stride-1 3x3 branch and a stride-1 1x1 branch");
    }
    RepBlockParams<T> out = p;
    ConvParams<T> fused = p.branch3x3;
    const std::int64_t c_out = p.out_channels();
    const std::int64_t c_in = p.in_channels();
    for (std::int64_t o = 0; o < c_out; ++o) {
        for (std::int64_t i = 0; i < c_in; ++i) {
            fused.weight.at(o, i, 1, 1) += p.branch1x1.weight.at(o, i, 0, 0);
        }
        if (p.use_identity) {
            fused.weight.at(o, o, 1, 1) += T(1);
        }
        fused.bias[o] += p.branch1x1.bias[o];
    }
    out.fused = std::move(fused);
    return out;
}

#define LGI_INSTANTIATE(T)                                                                                         \
    template RepBlockParams<T> make_rep_block<T>(std::int64_t, std::int64_t, bool, Rng&);                          \
    template BasicTensor<T> rep_block<T>(const BasicTensor<T>&, const RepBlockParams<T>&, Mode, RepBlockCache<T>*); \
    template RepBlockGrads<T> rep_block_backward<T>(const RepBlockCache<T>&, const RepBlockParams<T>&,              \
                                                    const BasicTensor<T>&);                                        \
    template RepBlockParams<T> reparameterize<T>(const RepBlockParams<T>&);

LGI_INSTANTIATE(float)
LGI_INSTANTIATE(double)

} // namespace lgi
