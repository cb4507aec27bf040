#pragma once

#include <optional>
#include <string>

#include "lgi/conv.hpp"

namespace lgi {

enum class Mode { train, deploy };

// Multi-branch block: relu(conv3x3(x) + conv1x1(x) [+ x]). reparameterize()
// folds the branches into a single 3x3 conv for deploy mode.
template <class T>
struct RepBlockParams {
    ConvParams<T> branch3x3;
    ConvParams<T> branch1x1;
    bool use_identity = false;
    std::optional<ConvParams<T>> fused; // derived, not a learnable parameter

    std::int64_t in_channels() const { return branch3x3.in_channels(); }
    std::int64_t out_channels() const { return branch3x3.out_channels(); }

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f)
    {
        ConvParams<T>::each(self.branch3x3, prefix + ".branch3x3", f);
        ConvParams<T>::each(self.branch1x1, prefix + ".branch1x1", f);
    }
};

template <class T>
RepBlockParams<T> make_rep_block(std::int64_t c_in, std::int64_t c_out, bool use_identity, Rng& rng);

template <class T>
struct RepBlockCache {
    BasicTensor<T> x;
    BasicTensor<T> pre; // pre-activation sum
};

// Throws StateError for deploy mode without `fused`.
template <class T>
BasicTensor<T> rep_block(const BasicTensor<T>& x, const RepBlockParams<T>& p, Mode mode,
                         RepBlockCache<T>* cache = nullptr);

template <class T>
struct RepBlockGrads {
    BasicTensor<T> x;
    RepBlockParams<T> params;
};

// Train-mode gradients.
template <class T>
RepBlockGrads<T> rep_block_backward(const RepBlockCache<T>& cache, const RepBlockParams<T>& p,
                                    const BasicTensor<T>& grad_out);

// Returns a copy of p with `fused` populated. Throws ConfigError when the
// identity branch is requested with c_in != c_out.
template <class T>
RepBlockParams<T> reparameterize(const RepBlockParams<T>& p);

template <class T>
void accumulate(RepBlockParams<T>& a, const RepBlockParams<T>& b)
{
    accumulate(a.branch3x3, b.branch3x3);
    accumulate(a.branch1x1, b.branch1x1);
}

} // namespace lgi
