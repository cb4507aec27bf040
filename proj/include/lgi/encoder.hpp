#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgi/attention.hpp"
#include "lgi/gii.hpp"
#include "lgi/lse.hpp"

namespace lgi {

struct EncoderConfig {
    std::int64_t d_model = 256;
    double split_ratio = 0.5;
    int heads = 8;
    std::int64_t d_ff = 1024;
    int aifi_depth = 1;
    bool enable_lse = true;
    bool enable_gii = true;
    bool gii_to_mid = false;
    GateActivation gate_activation = GateActivation::none;

    // Channels of S4/S5 gated by LSE: round(split_ratio * d_model).
    std::int64_t split_k() const;
    // Throws ConfigError naming the violated constraint.
    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

// Strides 8 / 16 / 32; all levels carry d_model channels.
template <class T>
struct FeaturePyramid {
    BasicTensor<T> s3;
    BasicTensor<T> s4;
    BasicTensor<T> s5;
};

// Throws ShapeError unless batch/channels agree and s3 = 2x s4 = 4x s5 spatially.
template <class T>
void validate_pyramid(const FeaturePyramid<T>& pyr, std::int64_t d_model);

// Top-down then bottom-up path:
//   inner5 = lateral5(s5a)
//   td4    = td4(s4' + up(inner5));   inner4 = lateral4(td4)
//   F_L    = td3(s3 + up(inner4))
//   F_M    = bu4(down3(F_L) + inner4)
//   F_H    = bu5(down4(F_M) + inner5)
template <class T>
struct FusionParams {
    ConvParams<T> lateral5; // 1x1
    ConvParams<T> lateral4; // 1x1
    RepBlockParams<T> td4;
    RepBlockParams<T> td3;
    ConvParams<T> down3; // 3x3 stride 2
    ConvParams<T> down4; // 3x3 stride 2
    RepBlockParams<T> bu4;
    RepBlockParams<T> bu5;

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f)
    {
        ConvParams<T>::each(self.lateral5, prefix + ".lateral5", f);
        ConvParams<T>::each(self.lateral4, prefix + ".lateral4", f);
        RepBlockParams<T>::each(self.td4, prefix + ".td4", f);
        RepBlockParams<T>::each(self.td3, prefix + ".td3", f);
        ConvParams<T>::each(self.down3, prefix + ".down3", f);
        ConvParams<T>::each(self.down4, prefix + ".down4", f);
        RepBlockParams<T>::each(self.bu4, prefix + ".bu4", f);
        RepBlockParams<T>::each(self.bu5, prefix + ".bu5", f);
    }
};

// Optional members are present iff the corresponding module was built. The
// forward pass uses them only when the config flag is also set.
template <class T>
struct EncoderParams {
    std::optional<LseParams<T>> lse_s4;
    std::optional<LseParams<T>> lse_s5;
    std::vector<AttentionParams<T>> aifi;
    FusionParams<T> fusion;
    std::optional<GiiParams<T>> gii_hl;
    std::optional<GiiParams<T>> gii_hm;

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f)
    {
        const std::string p = prefix.empty() ? "" : prefix + ".";
        if (self.lse_s4) LseParams<T>::each(*self.lse_s4, p + "lse.s4", f);
        if (self.lse_s5) LseParams<T>::each(*self.lse_s5, p + "lse.s5", f);
        for (std::size_t i = 0; i < self.aifi.size(); ++i) {
            AttentionParams<T>::each(self.aifi[i], p + "aifi." + std::to_string(i), f);
        }
        FusionParams<T>::each(self.fusion, p + "fusion", f);
        if (self.gii_hl) GiiParams<T>::each(*self.gii_hl, p + "gii.hl", f);
        if (self.gii_hm) GiiParams<T>::each(*self.gii_hm, p + "gii.hm", f);
    }
};

// Each submodule draws from its own named stream forked from `rng`, so shared
// modules receive identical weights under every flag combination.
template <class T>
EncoderParams<T> make_encoder(const EncoderConfig& cfg, const Rng& rng);

// Populates `fused` in every RepBlock.
template <class T>
void reparameterize_all(EncoderParams<T>& params);

template <class T>
struct EncoderCache {
    FeaturePyramid<T> in;
    std::optional<LseCache<T>> lse_s4, lse_s5;
    BasicTensor<T> s4p, s5p;
    std::vector<MhsaCache<T>> aifi;
    BasicTensor<T> s5a;
    BasicTensor<T> inner5, inner4, td4_out, f_l0, f_m0, f_h0;
    RepBlockCache<T> td4, td3, bu4, bu5;
    std::optional<GiiCache<T>> gii_hl, gii_hm;
    FeaturePyramid<T> out;

    // Hash of every ReLU activation pattern in the pass. Two evaluations with
    // the same signature lie on the same linear piece of the network.
    std::uint64_t relu_signature() const;
};

template <class T>
struct EncoderOutput {
    BasicTensor<T> tokens;   // (n, 1, L, d_model)
    FeaturePyramid<T> levels; // F_L, F_M, F_H
};

template <class T>
EncoderOutput<T> encoder_forward(const FeaturePyramid<T>& pyr, const EncoderParams<T>& params,
                                 const EncoderConfig& cfg, Mode mode, EncoderCache<T>* cache = nullptr);

template <class T>
struct EncoderGrads {
    FeaturePyramid<T> inputs;
    EncoderParams<T> params; // same layout as the forward params; unused modules stay zero
};

// Gradients of sum(grad_tokens * tokens). Requires a train-mode cache.
template <class T>
EncoderGrads<T> encoder_backward(const EncoderCache<T>& cache, const EncoderParams<T>& params,
                                 const EncoderConfig& cfg, const BasicTensor<T>& grad_tokens);

// Flattens each level to (n, 1, h*w, c) and concatenates along the token axis.
template <class T>
BasicTensor<T> concat_fuse(std::span<const BasicTensor<T>> levels);

template <class T>
BasicTensor<T> concat_fuse(const BasicTensor<T>& f_l, const BasicTensor<T>& f_m, const BasicTensor<T>& f_h)
{
    const BasicTensor<T> parts[] = {f_l, f_m, f_h};
    return concat_fuse<T>(std::span<const BasicTensor<T>>(parts));
}

// Splits token gradients back into per-level (n, c, h, w) gradients.
template <class T>
std::vector<BasicTensor<T>> concat_fuse_backward(const BasicTensor<T>& grad_tokens, std::span<const Shape> shapes);

} // namespace lgi
