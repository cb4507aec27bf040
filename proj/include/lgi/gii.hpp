#pragma once

#include <string>

#include "lgi/rep_block.hpp"

namespace lgi {

// Global information injection:
//   W_H  = resize(sigmoid(weight_conv(x_high)))
//   I_H  = resize(info_conv(x_high))
//   fuse = low_conv(x_low) * W_H + I_H
//   out  = rep(fuse)
// resize is half-pixel bilinear to the low-level resolution.
template <class T>
struct GiiParams {
    ConvParams<T> weight_conv; // 1x1, c_high -> c_low
    ConvParams<T> info_conv;   // 1x1, c_high -> c_low
    ConvParams<T> low_conv;    // 1x1, c_low -> c_low
    RepBlockParams<T> rep;     // c_low -> c_low

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f)
    {
        ConvParams<T>::each(self.weight_conv, prefix + ".weight_conv", f);
        ConvParams<T>::each(self.info_conv, prefix + ".info_conv", f);
        ConvParams<T>::each(self.low_conv, prefix + ".low_conv", f);
        RepBlockParams<T>::each(self.rep, prefix + ".rep", f);
    }
};

template <class T>
GiiParams<T> make_gii(std::int64_t c_low, std::int64_t c_high, Rng& rng);

template <class T>
struct GiiCache {
    BasicTensor<T> x_low;
    BasicTensor<T> x_high;
    BasicTensor<T> w_sig; // sigmoid(weight_conv(x_high)), high resolution
    BasicTensor<T> w_up;  // W_H
    BasicTensor<T> low;   // low_conv(x_low)
    RepBlockCache<T> rep;
};

template <class T>
BasicTensor<T> gii_forward(const BasicTensor<T>& x_low, const BasicTensor<T>& x_high, const GiiParams<T>& p,
                           Mode mode, GiiCache<T>* cache = nullptr);

template <class T>
struct GiiGrads {
    BasicTensor<T> x_low;
    BasicTensor<T> x_high;
    GiiParams<T> params;
};

template <class T>
GiiGrads<T> gii_backward(const GiiCache<T>& cache, const GiiParams<T>& p, const BasicTensor<T>& grad_out);

} // namespace lgi
