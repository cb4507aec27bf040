#pragma once

#include <string>

#include "lgi/conv.hpp"

namespace lgi {

enum class GateActivation { none, sigmoid };

// Local spatial enhancement: spatial weights from the low-level map gate the
// first split_k channels of the high-level map.
//   x_w = post_conv(patch_merge(pre_conv(x_low), r)) [-> sigmoid]
//   out = concat(x_w * x_high[:split_k], x_high[split_k:])
template <class T>
struct LseParams {
    ConvParams<T> pre_conv;  // 3x3, c_low -> c_low, same padding
    ConvParams<T> post_conv; // 1x1, r*r*c_low -> split_k
    std::int64_t split_k = 0;
    int reduction = 2;
    GateActivation gate = GateActivation::none;

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f)
    {
        ConvParams<T>::each(self.pre_conv, prefix + ".pre_conv", f);
        ConvParams<T>::each(self.post_conv, prefix + ".post_conv", f);
    }
};

template <class T>
LseParams<T> make_lse(std::int64_t c_low, std::int64_t c_high, std::int64_t split_k, int reduction,
                      GateActivation gate, Rng& rng);

template <class T>
struct LseCache {
    BasicTensor<T> x_low;
    BasicTensor<T> conv;   // pre_conv(x_low)
    BasicTensor<T> merged; // patch_merge(conv)
    BasicTensor<T> w_pre;  // post_conv(merged)
    BasicTensor<T> x_w;
    BasicTensor<T> x_fuse;
};

template <class T>
BasicTensor<T> lse_weights(const BasicTensor<T>& x_low, const LseParams<T>& p, LseCache<T>* cache = nullptr);

template <class T>
BasicTensor<T> lse_forward(const BasicTensor<T>& x_low, const BasicTensor<T>& x_high, const LseParams<T>& p,
                           LseCache<T>* cache = nullptr);

template <class T>
struct LseGrads {
    BasicTensor<T> x_low;
    BasicTensor<T> x_high;
    LseParams<T> params;
};

template <class T>
LseGrads<T> lse_backward(const LseCache<T>& cache, const LseParams<T>& p, const BasicTensor<T>& grad_out);

} // namespace lgi
