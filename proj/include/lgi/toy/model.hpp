#pragma once

#include <span>
#include <string>
#include <vector>

#include "lgi/config.hpp"
#include "lgi/encoder.hpp"
#include "lgi/param_store.hpp"
#include "lgi/toy/ap.hpp"

namespace lgi::toy {

// Per-location head outputs: objectness logit, 3 class logits, dx, dy, log w, log h.
inline constexpr std::int64_t kHeadOutputs = 8;
inline constexpr int kStrides[3] = {4, 8, 16};

// Backbone (stem and three 3x3 stride-2 stages with ReLU, strides 4/8/16),
// the encoder, and a token-wise MLP head d -> d -> 8.
struct ToyParams {
    ConvParams<float> stem;
    ConvParams<float> stage1;
    ConvParams<float> stage2;
    ConvParams<float> stage3;
    EncoderParams<float> encoder;
    ConvParams<float> head1;
    ConvParams<float> head2;

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f)
    {
        const std::string p = prefix.empty() ? "" : prefix + ".";
        ConvParams<float>::each(self.stem, p + "backbone.stem", f);
        ConvParams<float>::each(self.stage1, p + "backbone.stage1", f);
        ConvParams<float>::each(self.stage2, p + "backbone.stage2", f);
        ConvParams<float>::each(self.stage3, p + "backbone.stage3", f);
        EncoderParams<float>::each(self.encoder, prefix, f);
        ConvParams<float>::each(self.head1, p + "head.fc1", f);
        ConvParams<float>::each(self.head2, p + "head.fc2", f);
    }
};

// d_model 16, 2 heads, d_ff 32; heads follow d_model / 8.
EncoderConfig toy_encoder_config();
Config toy_default_config();

// Objectness bias starts at the logit of a 0.01 prior.
ToyParams make_toy_params(const EncoderConfig& cfg, std::uint64_t seed);

// Rebuilds the encoder config of a checkpoint from its parameter names and
// shapes. Heads follow the toy rule d_model / 8 and the gate activation
// cannot be recovered; pass `base` to supply both.
EncoderConfig infer_toy_config(const ParamStore& store, const EncoderConfig* base = nullptr);
ToyParams toy_params_from_store(const ParamStore& store, const EncoderConfig& cfg);

struct ToyCache {
    Tensor image;
    Tensor stem_pre, stem_out, s3_pre, s3, s4_pre, s4, s5_pre, s5;
    EncoderCache<float> encoder;
    Tensor tokens;
    Tensor h_pre;
    Tensor h_act;
};

struct ToyOutput {
    Tensor raw; // (n, 1, L, kHeadOutputs)
    FeaturePyramid<float> levels; // encoder outputs F_L, F_M, F_H
};

// Throws ConfigError for inconsistent configs and ShapeError unless the
// image is (n, 3, S, S) with S a multiple of 16.
ToyOutput toy_model_forward(const Tensor& images, const ToyParams& params, const EncoderConfig& cfg,
                            ToyCache* cache = nullptr);

// Gradients of sum(grad_raw * raw) with respect to every parameter.
ToyParams toy_model_backward(const ToyCache& cache, const ToyParams& params, const EncoderConfig& cfg,
                             const Tensor& grad_raw);

// One dense prediction per location, pre-threshold, in token order.
std::vector<DetectionSet> decode(const Tensor& raw, std::int64_t image_size);

// Score threshold, class-aware greedy NMS, then the top `max_det` by score.
DetectionSet postprocess(const DetectionSet& dets, double score_threshold = 0.05, double nms_iou = 0.5,
                         std::size_t max_det = 100);

struct LossResult {
    double loss = 0.0;
    double objectness = 0.0;
    double classification = 0.0;
    double box = 0.0;
    int positives = 0;
    Tensor grad; // d loss / d raw
};

// BCE objectness over every location, CE and L1 box terms on the positive
// (center-cell) locations, all divided by max(1, positives). Objects of size
// <= 7 px go to stride 4, <= 11 px to stride 8, larger ones to stride 16.
LossResult toy_loss(const Tensor& raw, std::span<const ToyScene* const> scenes, std::int64_t image_size);

} // namespace lgi::toy
