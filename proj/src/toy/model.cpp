#include "lgi/toy/model.hpp"

#include <algorithm>
#include <cmath>

namespace lgi::toy {

namespace {

// He-uniform for the plain conv+ReLU backbone so activations keep their scale.
ConvParams<float> backbone_conv(std::int64_t c_in, std::int64_t c_out, Rng& rng)
{
    ConvParams<float> p = make_conv<float>(c_in, c_out, 3, 2, rng);
    for (float& w : p.weight.data()) {
        w *= static_cast<float>(std::sqrt(6.0));
    }
    return p;
}

} // namespace

EncoderConfig toy_encoder_config()
{
    EncoderConfig c;
    c.d_model = 16;
    c.heads = 2;
    c.d_ff = 32;
    return c;
}

Config toy_default_config()
{
    Config c;
    c.encoder = toy_encoder_config();
    return c;
}

ToyParams make_toy_params(const EncoderConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    const Rng root(seed);
    const std::int64_t d = cfg.d_model;
    ToyParams p;
    Rng rb = root.fork("backbone");
    p.stem = backbone_conv(3, d, rb);
    p.stage1 = backbone_conv(d, d, rb);
    p.stage2 = backbone_conv(d, d, rb);
    p.stage3 = backbone_conv(d, d, rb);
    p.encoder = make_encoder<float>(cfg, root.fork("encoder"));
    Rng rh = root.fork("head");
    p.head1 = make_conv<float>(d, d, 1, 1, rh);
    p.head2 = make_conv<float>(d, kHeadOutputs, 1, 1, rh);
    p.head2.bias[0] = static_cast<float>(-std::log((1.0 - 0.01) / 0.01));
    return p;
}

EncoderConfig infer_toy_config(const ParamStore& store, const EncoderConfig* base)
{
    const auto* stem = store.find("backbone.stem.weight");
    if (stem == nullptr) {
        throw FormatError("checkpoint has no backbone.stem.weight; not a toy model");
    }
    EncoderConfig cfg = base != nullptr ? *base : toy_encoder_config();
    cfg.d_model = stem->value.n();
    if (base == nullptr) {
        cfg.heads = static_cast<int>(std::max<std::int64_t>(1, cfg.d_model / 8));
    }
    cfg.enable_lse = store.find("lse.s4.pre_conv.weight") != nullptr;
    cfg.enable_gii = store.find("gii.hl.low_conv.weight") != nullptr;
    cfg.gii_to_mid = store.find("gii.hm.low_conv.weight") != nullptr;
    if (const auto* post = store.find("lse.s4.post_conv.weight")) {
        cfg.split_ratio = static_cast<double>(post->value.n()) / static_cast<double>(cfg.d_model);
    }
    if (const auto* ffn = store.find("aifi.0.ffn1.weight")) {
        cfg.d_ff = ffn->value.n();
    }
    int depth = 0;
    while (store.find("aifi." + std::to_string(depth) + ".q.weight") != nullptr) {
        ++depth;
    }
    cfg.aifi_depth = depth;
    cfg.validate();
    return cfg;
}

ToyParams toy_params_from_store(const ParamStore& store, const EncoderConfig& cfg)
{
    ToyParams p = make_toy_params(cfg, 0);
    store.load_into(p);
    const auto names = param_names(p, "");
    if (names.size() != store.size()) {
        throw FormatError("checkpoint holds " + std::to_string(store.size()) + " tensors, model expects " +
                          std::to_string(names.size()));
    }
    return p;
}

ToyOutput toy_model_forward(const Tensor& images, const ToyParams& p, const EncoderConfig& cfg, ToyCache* cache)
{
    const Shape s = images.shape();
    if (s.c != 3 || s.h != s.w || s.h <= 0 || s.h % 16 != 0) {
        throw ShapeError("toy model expects (n, 3, S, S) with S a multiple of 16, got " + s.str());
    }
    ToyCache local;
    ToyCache& c = cache != nullptr ? *cache : local;
    c.image = images;
    c.stem_pre = conv2d(images, p.stem);
    c.stem_out = relu(c.stem_pre);
    c.s3_pre = conv2d(c.stem_out, p.stage1);
    c.s3 = relu(c.s3_pre);
    c.s4_pre = conv2d(c.s3, p.stage2);
    c.s4 = relu(c.s4_pre);
    c.s5_pre = conv2d(c.s4, p.stage3);
    c.s5 = relu(c.s5_pre);
    const FeaturePyramid<float> pyr{c.s3, c.s4, c.s5};
    EncoderOutput<float> enc = encoder_forward(pyr, p.encoder, cfg, Mode::train, &c.encoder);
    c.tokens = enc.tokens;
    c.h_pre = linear_tokens(c.tokens, p.head1);
    c.h_act = relu(c.h_pre);
    ToyOutput out;
    out.raw = linear_tokens(c.h_act, p.head2);
    out.levels = std::move(enc.levels);
    return out;
}

ToyParams toy_model_backward(const ToyCache& c, const ToyParams& p, const EncoderConfig& cfg, const Tensor& grad_raw)
{
    ToyParams g = zeros_like_params(p);
    auto g2 = linear_tokens_backward(c.h_act, p.head2, grad_raw);
    g.head2 = std::move(g2.params);
    auto g1 = linear_tokens_backward(c.tokens, p.head1, relu_backward(c.h_pre, g2.x));
    g.head1 = std::move(g1.params);
    EncoderGrads<float> ge = encoder_backward(c.encoder, p.encoder, cfg, g1.x);
    g.encoder = std::move(ge.params);

    auto gs3 = conv2d_backward(c.s4, p.stage3, relu_backward(c.s5_pre, ge.inputs.s5));
    g.stage3 = std::move(gs3.params);
    add_inplace(ge.inputs.s4, gs3.x);
    auto gs2 = conv2d_backward(c.s3, p.stage2, relu_backward(c.s4_pre, ge.inputs.s4));
    g.stage2 = std::move(gs2.params);
    add_inplace(ge.inputs.s3, gs2.x);
    auto gs1 = conv2d_backward(c.stem_out, p.stage1, relu_backward(c.s3_pre, ge.inputs.s3));
    g.stage1 = std::move(gs1.params);
    auto gst = conv2d_backward(c.image, p.stem, relu_backward(c.stem_pre, gs1.x));
    g.stem = std::move(gst.params);
    return g;
}

namespace {

struct Cell {
    int level;
    std::int64_t i, j; // row, column
    int stride;
};

// Token index -> grid cell for an S x S image.
Cell cell_of(std::int64_t t, std::int64_t image_size)
{
    for (int l = 0; l < 3; ++l) {
        const std::int64_t side = image_size / kStrides[l];
        if (t < side * side) {
            return {l, t / side, t % side, kStrides[l]};
        }
        t -= side * side;
    }
    throw ShapeError("token index beyond the pyramid");
}

std::int64_t level_offset(int level, std::int64_t image_size)
{
    std::int64_t off = 0;
    for (int l = 0; l < level; ++l) {
        const std::int64_t side = image_size / kStrides[l];
        off += side * side;
    }
    return off;
}

std::int64_t token_count(std::int64_t image_size)
{
    return level_offset(3, image_size);
}

int level_for_size(int size)
{
    return size <= 7 ? 0 : (size <= 11 ? 1 : 2);
}

double clamp_log(double v)
{
    return std::clamp(v, -8.0, 8.0);
}

} // namespace

std::vector<DetectionSet> decode(const Tensor& raw, std::int64_t image_size)
{
    const std::int64_t L = token_count(image_size);
    if (raw.c() != 1 || raw.h() != L || raw.w() != kHeadOutputs) {
        throw ShapeError("decode: raw " + raw.shape().str() + " does not match image size " +
                         std::to_string(image_size));
    }
    const double S = static_cast<double>(image_size);
    std::vector<DetectionSet> out(static_cast<std::size_t>(raw.n()));
    for (std::int64_t n = 0; n < raw.n(); ++n) {
        DetectionSet& set = out[static_cast<std::size_t>(n)];
        set.reserve(static_cast<std::size_t>(L));
        for (std::int64_t t = 0; t < L; ++t) {
            const float* r = raw.raw() + (n * L + t) * kHeadOutputs;
            const Cell cell = cell_of(t, image_size);
            int best = 0;
            for (int k = 1; k < kNumClasses; ++k) {
                if (r[1 + k] > r[1 + best]) best = k;
            }
            double denom = 0.0;
            for (int k = 0; k < kNumClasses; ++k) {
                denom += std::exp(static_cast<double>(r[1 + k] - r[1 + best]));
            }
            const double obj = sigmoid_scalar(static_cast<double>(r[0]));
            const double st = cell.stride;
            const double cx = std::clamp((cell.j + 0.5 + r[4]) * st, 0.5, S - 0.5);
            const double cy = std::clamp((cell.i + 0.5 + r[5]) * st, 0.5, S - 0.5);
            const double w = std::max(1.0, std::exp(clamp_log(r[6])) * st);
            const double h = std::max(1.0, std::exp(clamp_log(r[7])) * st);
            Detection d;
            d.cls = best;
            d.score = obj / denom;
            d.box = {std::max(0.0, cx - 0.5 * w), std::max(0.0, cy - 0.5 * h), std::min(S, cx + 0.5 * w),
                     std::min(S, cy + 0.5 * h)};
            set.push_back(d);
        }
    }
    return out;
}

DetectionSet postprocess(const DetectionSet& dets, double score_threshold, double nms_iou, std::size_t max_det)
{
    DetectionSet cand;
    for (const Detection& d : dets) {
        if (d.score >= score_threshold) cand.push_back(d);
    }
    std::stable_sort(cand.begin(), cand.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    DetectionSet kept;
    for (const Detection& d : cand) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return k.cls == d.cls && iou(k.box, d.box) > nms_iou;
        });
        if (!suppressed) {
            kept.push_back(d);
            if (kept.size() == max_det) break;
        }
    }
    return kept;
}

LossResult toy_loss(const Tensor& raw, std::span<const ToyScene* const> scenes, std::int64_t image_size)
{
    const std::int64_t L = token_count(image_size);
    if (raw.n() != static_cast<std::int64_t>(scenes.size()) || raw.h() != L || raw.w() != kHeadOutputs) {
        throw ShapeError("toy_loss: raw " + raw.shape().str() + " does not match " + std::to_string(scenes.size()) +
                         " scenes");
    }
    struct Target {
        std::int64_t token;
        int cls;
        double box[4];
    };
    std::vector<std::vector<Target>> targets(scenes.size());
    int positives = 0;
    for (std::size_t n = 0; n < scenes.size(); ++n) {
        for (const ToyObject& o : scenes[n]->objects) {
            const int level = level_for_size(o.size);
            const int st = kStrides[level];
            const std::int64_t side = image_size / st;
            const std::int64_t j = std::clamp<std::int64_t>(static_cast<std::int64_t>(o.cx() / st), 0, side - 1);
            const std::int64_t i = std::clamp<std::int64_t>(static_cast<std::int64_t>(o.cy() / st), 0, side - 1);
            const std::int64_t token = level_offset(level, image_size) + i * side + j;
            auto& list = targets[n];
            if (std::any_of(list.begin(), list.end(), [&](const Target& t) { return t.token == token; })) {
                continue; // first object keeps a shared cell
            }
            list.push_back({token,
                            static_cast<int>(o.cls),
                            {o.cx() / st - j - 0.5, o.cy() / st - i - 0.5, std::log(o.size / double(st)),
                             std::log(o.size / double(st))}});
            ++positives;
        }
    }
    const double norm = 1.0 / std::max(1, positives);
    LossResult r;
    r.positives = positives;
    r.grad = Tensor(raw.shape());
    for (std::size_t n = 0; n < scenes.size(); ++n) {
        std::vector<char> is_pos(static_cast<std::size_t>(L), 0);
        for (const Target& t : targets[n]) is_pos[static_cast<std::size_t>(t.token)] = 1;
        const float* base = raw.raw() + static_cast<std::int64_t>(n) * L * kHeadOutputs;
        float* gbase = r.grad.raw() + static_cast<std::int64_t>(n) * L * kHeadOutputs;
        for (std::int64_t t = 0; t < L; ++t) {
            const double z = base[t * kHeadOutputs];
            const double y = is_pos[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
            r.objectness += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
            gbase[t * kHeadOutputs] = static_cast<float>((sigmoid_scalar(z) - y) * norm);
        }
        for (const Target& t : targets[n]) {
            const float* r8 = base + t.token * kHeadOutputs;
            float* g8 = gbase + t.token * kHeadOutputs;
            double mx = r8[1];
            for (int k = 1; k < kNumClasses; ++k) mx = std::max(mx, static_cast<double>(r8[1 + k]));
            double sum = 0.0;
            for (int k = 0; k < kNumClasses; ++k) sum += std::exp(r8[1 + k] - mx);
            r.classification += mx + std::log(sum) - r8[1 + t.cls];
            for (int k = 0; k < kNumClasses; ++k) {
                const double prob = std::exp(r8[1 + k] - mx) / sum;
                g8[1 + k] = static_cast<float>((prob - (k == t.cls ? 1.0 : 0.0)) * norm);
            }
            for (int k = 0; k < 4; ++k) {
                const double diff = r8[4 + k] - t.box[k];
                r.box += std::abs(diff);
                g8[4 + k] = static_cast<float>((diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) * norm);
            }
        }
    }
    r.objectness *= norm;
    r.classification *= norm;
    r.box *= norm;
    r.loss = r.objectness + r.classification + r.box;
    return r;
}

} // namespace lgi::toy
