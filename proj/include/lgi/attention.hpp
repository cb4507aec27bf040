#pragma once

#include <string>
#include <vector>

#include "lgi/conv.hpp"

namespace lgi {

template <class T>
struct LayerNormParams {
    BasicTensor<T> gamma; // (1, d, 1, 1)
    BasicTensor<T> beta;  // (1, d, 1, 1)

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f)
    {
        f(prefix + ".gamma", self.gamma);
        f(prefix + ".beta", self.beta);
    }
};

inline constexpr double kLayerNormEps = 1e-5;

// Pre-norm transformer encoder layer. Linear weights are stored as 1x1 conv
// weights (d_out, d_in, 1, 1).
template <class T>
struct AttentionParams {
    int heads = 1;
    LayerNormParams<T> ln1;
    ConvParams<T> q, k, v, o;
    LayerNormParams<T> ln2;
    ConvParams<T> ffn1; // d_model -> d_ff
    ConvParams<T> ffn2; // d_ff -> d_model

    std::int64_t d_model() const { return q.in_channels(); }
    std::int64_t d_ff() const { return ffn1.out_channels(); }

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f)
    {
        LayerNormParams<T>::each(self.ln1, prefix + ".ln1", f);
        ConvParams<T>::each(self.q, prefix + ".q", f);
        ConvParams<T>::each(self.k, prefix + ".k", f);
        ConvParams<T>::each(self.v, prefix + ".v", f);
        ConvParams<T>::each(self.o, prefix + ".o", f);
        LayerNormParams<T>::each(self.ln2, prefix + ".ln2", f);
        ConvParams<T>::each(self.ffn1, prefix + ".ffn1", f);
        ConvParams<T>::each(self.ffn2, prefix + ".ffn2", f);
    }
};

template <class T>
AttentionParams<T> make_attention(std::int64_t d_model, int heads, std::int64_t d_ff, Rng& rng);

// ---- building blocks --------------------------------------------------------------

template <class T>
struct LayerNormCache {
    BasicTensor<T> xhat;
    std::vector<T> rstd; // one per row
};

// Normalizes the last axis of tokens (n, 1, seq, d).
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& tokens, const LayerNormParams<T>& p, LayerNormCache<T>* cache);

template <class T>
BasicTensor<T> layer_norm_backward(const LayerNormCache<T>& cache, const LayerNormParams<T>& p,
                                   const BasicTensor<T>& grad_out, LayerNormParams<T>& grad_params);

// Exact (erf) GELU.
template <class T> BasicTensor<T> gelu(const BasicTensor<T>& x);
template <class T> BasicTensor<T> gelu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

// Row-wise softmax over contiguous rows of length `cols`, max-subtracted.
template <class T>
void softmax_rows(std::span<const T> logits, std::int64_t cols, std::span<T> out);

// (n, c, h, w) <-> (n, 1, h*w, c); row-major flattening of the (h, w) grid.
template <class T> BasicTensor<T> to_tokens(const BasicTensor<T>& x);
template <class T> BasicTensor<T> from_tokens(const BasicTensor<T>& tokens, std::int64_t h, std::int64_t w);

// 2-D sine-cosine positional embedding, shape (1, 1, h*w, d_model). Row y*w + x
// holds [sin(x*om_k), cos(x*om_k), sin(y*om_k), cos(y*om_k)] for k in [0, d/4),
// om_k = 10000^(-k / (d/4)). Throws ConfigError unless d_model % 4 == 0.
template <class T>
BasicTensor<T> sincos_pos2d(std::int64_t h, std::int64_t w, std::int64_t d_model, double temperature = 10000.0);

// ---- full layer ---------------------------------------------------------------------

template <class T>
struct MhsaCache {
    BasicTensor<T> x;
    LayerNormCache<T> ln1;
    BasicTensor<T> a;     // LN1(x)
    BasicTensor<T> qk_in; // a + pos
    BasicTensor<T> q, k, v;
    std::vector<T> probs; // (n, heads, seq, seq)
    BasicTensor<T> attn_concat;
    BasicTensor<T> x1; // x + attention
    LayerNormCache<T> ln2;
    BasicTensor<T> b; // LN2(x1)
    BasicTensor<T> h_pre;
    BasicTensor<T> h_act;
};

// y = x1 + FFN(LN2(x1)), x1 = x + O(Attn(Q=K-input LN1(x)+pos, V-input LN1(x))).
// `pos` has shape (1, 1, seq, d_model).
template <class T>
BasicTensor<T> mhsa_layer(const BasicTensor<T>& tokens, const AttentionParams<T>& p, const BasicTensor<T>& pos,
                          MhsaCache<T>* cache = nullptr);

template <class T>
struct MhsaGrads {
    BasicTensor<T> x;
    AttentionParams<T> params;
};

template <class T>
MhsaGrads<T> mhsa_backward(const MhsaCache<T>& cache, const AttentionParams<T>& p, const BasicTensor<T>& grad_out);

template <class T>
void accumulate(AttentionParams<T>& a, const AttentionParams<T>& b);

} // namespace lgi
