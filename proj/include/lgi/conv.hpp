#pragma once

#include <string>

#include "lgi/tensor.hpp"

namespace lgi {

template <class T>
struct ConvParams {
    BasicTensor<T> weight; // (c_out, c_in, k, k)
    BasicTensor<T> bias;   // (1, c_out, 1, 1)
    int stride = 1;
    int padding = 0;

    std::int64_t out_channels() const { return weight.n(); }
    std::int64_t in_channels() const { return weight.c(); }
    std::int64_t kernel() const { return weight.h(); }

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f)
    {
        f(prefix + ".weight", self.weight);
        f(prefix + ".bias", self.bias);
    }
};

// Kaiming-uniform fan-in with negative slope sqrt(5): weights U(-b, b), b = 1/sqrt(fan_in);
// zero bias; "same" padding (k-1)/2.
template <class T>
ConvParams<T> make_conv(std::int64_t c_in, std::int64_t c_out, int k, int stride, Rng& rng);

template <class T>
ConvParams<T> zero_conv(std::int64_t c_in, std::int64_t c_out, int k, int stride = 1);

std::int64_t conv_out_size(std::int64_t in, int k, int stride, int padding);

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const ConvParams<T>& p);

template <class T>
struct ConvGrads {
    BasicTensor<T> x;
    ConvParams<T> params; // weight/bias slots hold gradients
};

template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& p, const BasicTensor<T>& grad_out);

// Token-wise linear layer: tokens (n, 1, seq, d_in) with weight (d_out, d_in, 1, 1).
template <class T>
BasicTensor<T> linear_tokens(const BasicTensor<T>& tokens, const ConvParams<T>& p);

template <class T>
ConvGrads<T> linear_tokens_backward(const BasicTensor<T>& tokens, const ConvParams<T>& p,
                                    const BasicTensor<T>& grad_out);

// Accumulates b's weight/bias into a.
template <class T>
void accumulate(ConvParams<T>& a, const ConvParams<T>& b);

} // namespace lgi
