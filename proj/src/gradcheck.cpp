#include "lgi/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "lgi/encoder.hpp"
#include "lgi/param_store.hpp"
#include "lgi/patch_merge.hpp"
#include "lgi/resize.hpp"

namespace lgi {

double rel_error(double analytic, double numeric)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelErrFloor});
    return std::abs(analytic - numeric) / denom;
}

Probe make_probe(const TensorD& y, const TensorD& g, std::uint64_t signature)
{
    require_same_shape(y.shape(), g.shape(), "make_probe");
    Probe p;
    p.signature = signature;
    for (std::int64_t i = 0; i < y.numel(); ++i) {
        p.value += y[i] * g[i];
        p.magnitude += std::abs(y[i] * g[i]);
    }
    return p;
}

double fd_coordinate(const ScalarFn& f, double& x, double step)
{
    const double x0 = x;
    const double h = step * (std::abs(x0) + 1.0);
    x = x0 + h;
    const double fp = f();
    x = x0 - h;
    const double fm = f();
    x = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("fd_gradient: objective is not finite near x = " + std::to_string(x0));
    }
    return (fp - fm) / (2.0 * h);
}

TensorD fd_gradient(const ScalarFn& f, TensorD& at, double step)
{
    if (!(step > 0.0)) {
        throw NumericError("fd_gradient: step must be positive");
    }
    TensorD g(at.shape());
    for (std::int64_t i = 0; i < at.numel(); ++i) {
        g[i] = fd_coordinate(f, at[i], step);
    }
    return g;
}

namespace {

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h = (h ^ ch) * 1099511628211ULL;
    }
    return h;
}

// Distinct coordinates in random order; all of them when numel <= max_coords.
std::vector<std::int64_t> sample_coords(std::int64_t numel, int max_coords, Rng& rng)
{
    std::vector<std::int64_t> idx(static_cast<std::size_t>(numel));
    std::iota(idx.begin(), idx.end(), 0);
    if (numel <= max_coords) {
        return idx;
    }
    for (int i = 0; i < max_coords; ++i) {
        const auto j = rng.uniform_int(i, numel - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(max_coords));
    return idx;
}

} // namespace

GradReport run_case(const GradCase& c, double tolerance, std::uint64_t seed, double step)
{
    GradReport r;
    r.op = c.op;
    r.tolerance = tolerance;
    r.step = step;
    const Probe base = c.eval();
    const std::vector<TensorD> analytic = c.analytic();
    if (analytic.size() != c.wrt.size()) {
        throw StateError("gradcheck: case " + c.op + " returned " + std::to_string(analytic.size()) +
                         " gradients for " + std::to_string(c.wrt.size()) + " tensors");
    }
    Rng rng = Rng(seed).fork(fnv1a(c.op));
    bool ok = true;
    for (std::size_t t = 0; t < c.wrt.size(); ++t) {
        TensorD& x = *c.wrt[t].second;
        require_same_shape(x.shape(), analytic[t].shape(), "gradcheck");
        TensorCheck tc;
        tc.name = c.wrt[t].first;
        // Coordinates whose probes cross a ReLU kink are replaced by further
        // samples, up to four times the budget.
        const int budget = c.max_coords;
        for (std::int64_t i : sample_coords(x.numel(), 4 * budget, rng)) {
            if (tc.checked == budget) {
                break;
            }
            const double x0 = x[i];
            double h = step * (std::abs(x0) + 1.0);
            bool crossed = false;
            double magnitude = base.magnitude;
            auto diff = [&](double hh) {
                x[i] = x0 + hh;
                const Probe p = c.eval();
                x[i] = x0 - hh;
                const Probe m = c.eval();
                x[i] = x0;
                if (!std::isfinite(p.value) || !std::isfinite(m.value)) {
                    throw NumericError("gradcheck: non-finite objective in " + c.op);
                }
                crossed = crossed || p.signature != base.signature || m.signature != base.signature;
                magnitude = std::max({magnitude, p.magnitude, m.magnitude});
                return (p.value - m.value) / (2.0 * hh);
            };
            // Richardson: cancels the h^2 term of the central difference. A probe
            // that crosses a ReLU kink is retried with up to two 8x smaller steps.
            double d1 = 0.0;
            double d2 = 0.0;
            for (int attempt = 0; attempt < 3; ++attempt, h /= 8.0) {
                crossed = false;
                d1 = diff(h);
                d2 = diff(h / 2.0);
                if (!crossed) {
                    break;
                }
            }
            if (crossed) {
                ++tc.skipped;
                continue;
            }
            const double numeric = (4.0 * d2 - d1) / 3.0;
            const double a = analytic[t][i];
            const double e = rel_error(a, numeric);
            ++tc.checked;
            tc.max_raw_rel_err = std::max(tc.max_raw_rel_err, e);
            // Gradients too small to resolve at `tolerance` against the rounding
            // noise of the difference quotient are compared absolutely instead.
            const double noise = kNoiseFactor * std::numeric_limits<double>::epsilon() * (magnitude + 1.0) / h;
            const double scale = std::max(std::abs(a), std::abs(numeric));
            if (scale * tolerance <= noise && std::abs(a - numeric) <= noise) {
                ++tc.noise_limited;
                continue;
            }
            if (e >= tc.max_rel_err) {
                tc.max_rel_err = e;
                tc.worst_analytic = a;
                tc.worst_numeric = numeric;
            }
        }
        if (tc.checked == 0 && x.numel() > 0) {
            ok = false;
        }
        r.max_rel_err = std::max(r.max_rel_err, tc.max_rel_err);
        r.max_raw_rel_err = std::max(r.max_raw_rel_err, tc.max_raw_rel_err);
        r.tensors.push_back(std::move(tc));
    }
    r.passed = ok && r.max_rel_err < tolerance;
    return r;
}

namespace {

void mix(std::uint64_t& h, std::uint64_t v)
{
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

std::uint64_t mask_hash(const TensorD& pre)
{
    std::uint64_t h = 0;
    for (std::int64_t i = 0; i < pre.numel(); ++i) {
        mix(h, pre[i] > 0.0 ? 1U : 0U);
    }
    return h;
}

double min_abs(const TensorD& x)
{
    double m = INFINITY;
    for (double v : x.data()) {
        m = std::min(m, std::abs(v));
    }
    return m;
}

constexpr double kKinkMargin = 1e-3;
constexpr int kMaxResample = 1000;

template <class P>
void add_params(GradCase& c, P& params, const std::string& prefix)
{
    for_each_param(params, prefix, [&](const std::string& name, TensorD& t) { c.wrt.emplace_back(name, &t); });
}

template <class P>
void append_grads(std::vector<TensorD>& out, const P& grads)
{
    for_each_param(grads, "", [&](const std::string&, const TensorD& t) { out.push_back(t); });
}

TensorD rnd(Shape s, Rng& rng) { return random_normal<double>(s, rng); }

// ---- primitive cases ---------------------------------------------------------------

GradCase sigmoid_case(Rng rng)
{
    struct S { TensorD x, g; };
    auto s = std::make_shared<S>(S{rnd({2, 3, 4, 5}, rng), rnd({2, 3, 4, 5}, rng)});
    GradCase c;
    c.op = "elementwise.sigmoid";
    c.wrt = {{"x", &s->x}};
    c.eval = [s] { return make_probe(sigmoid(s->x), s->g); };
    c.analytic = [s] { return std::vector<TensorD>{sigmoid_backward(sigmoid(s->x), s->g)}; };
    c.state = s;
    return c;
}

GradCase mul_case(Rng rng)
{
    struct S { TensorD a, b, g; };
    auto s = std::make_shared<S>(S{rnd({1, 2, 3, 4}, rng), rnd({1, 2, 3, 4}, rng), rnd({1, 2, 3, 4}, rng)});
    GradCase c;
    c.op = "elementwise.mul";
    c.wrt = {{"a", &s->a}, {"b", &s->b}};
    c.eval = [s] { return make_probe(mul(s->a, s->b), s->g); };
    c.analytic = [s] { return std::vector<TensorD>{mul(s->g, s->b), mul(s->g, s->a)}; };
    c.state = s;
    return c;
}

GradCase relu_case(Rng rng)
{
    struct S { TensorD x, g; };
    auto s = std::make_shared<S>();
    do {
        s->x = rnd({1, 2, 4, 4}, rng);
    } while (min_abs(s->x) < kKinkMargin);
    s->g = rnd({1, 2, 4, 4}, rng);
    GradCase c;
    c.op = "elementwise.relu";
    c.wrt = {{"x", &s->x}};
    c.eval = [s] { return make_probe(relu(s->x), s->g, mask_hash(s->x)); };
    c.analytic = [s] { return std::vector<TensorD>{relu_backward(s->x, s->g)}; };
    c.state = s;
    return c;
}

GradCase conv_case(Rng rng, const std::string& op, Shape xs, std::int64_t c_out, int k, int stride, bool tokens)
{
    struct S { TensorD x, g; ConvParams<double> p; bool tokens; };
    auto s = std::make_shared<S>();
    s->x = rnd(xs, rng);
    s->tokens = tokens;
    const std::int64_t c_in = tokens ? xs.w : xs.c;
    s->p = make_conv<double>(c_in, c_out, k, stride, rng);
    s->p.bias = rnd(s->p.bias.shape(), rng);
    auto fwd = [s] { return s->tokens ? linear_tokens(s->x, s->p) : conv2d(s->x, s->p); };
    s->g = rnd(fwd().shape(), rng);
    GradCase c;
    c.op = op;
    c.wrt = {{"x", &s->x}};
    add_params(c, s->p, "p");
    c.eval = [s, fwd] { return make_probe(fwd(), s->g); };
    c.analytic = [s] {
        auto g = s->tokens ? linear_tokens_backward(s->x, s->p, s->g) : conv2d_backward(s->x, s->p, s->g);
        std::vector<TensorD> out{g.x};
        append_grads(out, g.params);
        return out;
    };
    c.state = s;
    return c;
}

GradCase patch_merge_case(Rng rng, int r)
{
    struct S { TensorD x, g; int r; };
    auto s = std::make_shared<S>();
    s->r = r;
    s->x = rnd({1, 2, 2 * r, 3 * r}, rng);
    s->g = rnd(patch_merge(s->x, r).shape(), rng);
    GradCase c;
    c.op = "patch_merge.r" + std::to_string(r);
    c.wrt = {{"x", &s->x}};
    c.eval = [s] { return make_probe(patch_merge(s->x, s->r), s->g); };
    c.analytic = [s] { return std::vector<TensorD>{patch_unmerge(s->g, s->r)}; };
    c.state = s;
    return c;
}

GradCase resize_case(Rng rng, const std::string& op, Shape xs, std::int64_t oh, std::int64_t ow)
{
    struct S { TensorD x, g; std::int64_t oh, ow; };
    auto s = std::make_shared<S>();
    s->x = rnd(xs, rng);
    s->oh = oh;
    s->ow = ow;
    s->g = rnd({xs.n, xs.c, oh, ow}, rng);
    GradCase c;
    c.op = op;
    c.wrt = {{"x", &s->x}};
    c.eval = [s] { return make_probe(bilinear_resize(s->x, s->oh, s->ow), s->g); };
    c.analytic = [s] { return std::vector<TensorD>{bilinear_resize_backward(s->g, s->x.h(), s->x.w())}; };
    c.state = s;
    return c;
}

GradCase layer_norm_case(Rng rng)
{
    struct S { TensorD x, g; LayerNormParams<double> p; };
    auto s = std::make_shared<S>();
    s->x = rnd(token_shape(2, 3, 8), rng);
    s->p.gamma = rnd({1, 8, 1, 1}, rng);
    s->p.beta = rnd({1, 8, 1, 1}, rng);
    s->g = rnd(s->x.shape(), rng);
    GradCase c;
    c.op = "layer_norm";
    c.wrt = {{"x", &s->x}};
    add_params(c, s->p, "p");
    c.eval = [s] { return make_probe(layer_norm<double>(s->x, s->p, nullptr), s->g); };
    c.analytic = [s] {
        LayerNormCache<double> cache;
        layer_norm(s->x, s->p, &cache);
        LayerNormParams<double> gp = zeros_like_params(s->p);
        std::vector<TensorD> out{layer_norm_backward(cache, s->p, s->g, gp)};
        append_grads(out, gp);
        return out;
    };
    c.state = s;
    return c;
}

GradCase gelu_case(Rng rng)
{
    struct S { TensorD x, g; };
    auto s = std::make_shared<S>(S{rnd({1, 2, 3, 4}, rng), rnd({1, 2, 3, 4}, rng)});
    GradCase c;
    c.op = "gelu";
    c.wrt = {{"x", &s->x}};
    c.eval = [s] { return make_probe(gelu(s->x), s->g); };
    c.analytic = [s] { return std::vector<TensorD>{gelu_backward(s->x, s->g)}; };
    c.state = s;
    return c;
}

GradCase mhsa_case(Rng rng)
{
    struct S { TensorD x, pos, g; AttentionParams<double> p; };
    auto s = std::make_shared<S>();
    const std::int64_t d = 8;
    s->x = rnd(token_shape(2, 5, d), rng);
    s->pos = rnd(token_shape(1, 5, d), rng);
    s->p = make_attention<double>(d, 2, 16, rng);
    for_each_param(s->p, "", [&](const std::string& name, TensorD& t) {
        if (name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta")) {
            t = rnd(t.shape(), rng);
        }
    });
    s->g = rnd(s->x.shape(), rng);
    GradCase c;
    c.op = "mhsa_layer";
    c.wrt = {{"x", &s->x}};
    add_params(c, s->p, "p");
    c.eval = [s] { return make_probe(mhsa_layer(s->x, s->p, s->pos), s->g); };
    c.analytic = [s] {
        MhsaCache<double> cache;
        mhsa_layer(s->x, s->p, s->pos, &cache);
        auto g = mhsa_backward(cache, s->p, s->g);
        std::vector<TensorD> out{g.x};
        append_grads(out, g.params);
        return out;
    };
    c.state = s;
    return c;
}

GradCase rep_block_case(Rng rng, bool identity)
{
    struct S { TensorD x, g; RepBlockParams<double> p; };
    auto s = std::make_shared<S>();
    const std::int64_t c_in = 3;
    const std::int64_t c_out = identity ? 3 : 4;
    for (int attempt = 0;; ++attempt) {
        if (attempt == kMaxResample) {
            throw NumericError("gradcheck: could not draw a kink-free rep_block instance");
        }
        s->x = rnd({1, c_in, 5, 5}, rng);
        s->p = make_rep_block<double>(c_in, c_out, identity, rng);
        s->p.branch3x3.bias = rnd(s->p.branch3x3.bias.shape(), rng);
        RepBlockCache<double> cache;
        rep_block(s->x, s->p, Mode::train, &cache);
        if (min_abs(cache.pre) >= kKinkMargin) break;
    }
    s->g = rnd({1, c_out, 5, 5}, rng);
    GradCase c;
    c.op = identity ? "rep_block.identity" : "rep_block.no_identity";
    c.wrt = {{"x", &s->x}};
    add_params(c, s->p, "p");
    c.eval = [s] {
        RepBlockCache<double> cache;
        const TensorD y = rep_block(s->x, s->p, Mode::train, &cache);
        return make_probe(y, s->g, mask_hash(cache.pre));
    };
    c.analytic = [s] {
        RepBlockCache<double> cache;
        rep_block(s->x, s->p, Mode::train, &cache);
        auto g = rep_block_backward(cache, s->p, s->g);
        std::vector<TensorD> out{g.x};
        append_grads(out, g.params);
        return out;
    };
    c.state = s;
    return c;
}

// ---- composite cases ---------------------------------------------------------------

GradCase lse_case(Rng rng, int r, GateActivation gate)
{
    struct S { TensorD lo, hi, g; LseParams<double> p; };
    auto s = std::make_shared<S>();
    s->lo = rnd({2, 2, 2 * r, 2 * r}, rng);
    s->hi = rnd({2, 4, 2, 2}, rng);
    s->p = make_lse<double>(2, 4, 2, r, gate, rng);
    s->p.pre_conv.bias = rnd(s->p.pre_conv.bias.shape(), rng);
    s->p.post_conv.bias = rnd(s->p.post_conv.bias.shape(), rng);
    s->g = rnd(s->hi.shape(), rng);
    GradCase c;
    c.op = std::string("lse_forward.r") + std::to_string(r) + (gate == GateActivation::sigmoid ? ".sigmoid" : "");
    c.primitive = false;
    c.wrt = {{"x_low", &s->lo}, {"x_high", &s->hi}};
    add_params(c, s->p, "lse");
    c.eval = [s] { return make_probe(lse_forward(s->lo, s->hi, s->p), s->g); };
    c.analytic = [s] {
        LseCache<double> cache;
        lse_forward(s->lo, s->hi, s->p, &cache);
        auto g = lse_backward(cache, s->p, s->g);
        std::vector<TensorD> out{g.x_low, g.x_high};
        append_grads(out, g.params);
        return out;
    };
    c.state = s;
    return c;
}

GradCase gii_case(Rng rng)
{
    struct S { TensorD lo, hi, g; GiiParams<double> p; };
    auto s = std::make_shared<S>();
    for (int attempt = 0;; ++attempt) {
        if (attempt == kMaxResample) {
            throw NumericError("gradcheck: could not draw a kink-free gii instance");
        }
        s->lo = rnd({1, 2, 6, 6}, rng);
        s->hi = rnd({1, 2, 3, 3}, rng);
        s->p = make_gii<double>(2, 2, rng);
        for_each_param(s->p, "", [&](const std::string& name, TensorD& t) {
            if (name.ends_with(".bias")) t = rnd(t.shape(), rng);
        });
        GiiCache<double> cache;
        gii_forward(s->lo, s->hi, s->p, Mode::train, &cache);
        if (min_abs(cache.rep.pre) >= kKinkMargin) break;
    }
    s->g = rnd(s->lo.shape(), rng);
    GradCase c;
    c.op = "gii_forward";
    c.primitive = false;
    c.wrt = {{"x_low", &s->lo}, {"x_high", &s->hi}};
    add_params(c, s->p, "gii");
    c.eval = [s] {
        GiiCache<double> cache;
        const TensorD y = gii_forward(s->lo, s->hi, s->p, Mode::train, &cache);
        return make_probe(y, s->g, mask_hash(cache.rep.pre));
    };
    c.analytic = [s] {
        GiiCache<double> cache;
        gii_forward(s->lo, s->hi, s->p, Mode::train, &cache);
        auto g = gii_backward(cache, s->p, s->g);
        std::vector<TensorD> out{g.x_low, g.x_high};
        append_grads(out, g.params);
        return out;
    };
    c.state = s;
    return c;
}

// Full pipeline on the toy pyramid. With thousands of ReLU units a kink-free
// draw is impractical, so coordinates whose probes cross a kink are skipped
// via the activation signature instead.
GradCase encoder_case(Rng rng)
{
    struct S { FeaturePyramid<double> pyr; TensorD g; EncoderParams<double> p; EncoderConfig cfg; };
    auto s = std::make_shared<S>();
    s->cfg.d_model = 32;
    s->cfg.heads = 4;
    s->cfg.d_ff = 64;
    s->cfg.enable_lse = true;
    s->cfg.enable_gii = true;
    s->cfg.gii_to_mid = true;
    s->pyr.s3 = random_normal<double>({1, 32, 16, 16}, rng, 1.0);
    s->pyr.s4 = random_normal<double>({1, 32, 8, 8}, rng, 1.0);
    s->pyr.s5 = random_normal<double>({1, 32, 4, 4}, rng, 1.0);
    s->p = make_encoder<double>(s->cfg, rng.fork("params"));
    for_each_param(s->p, "", [&](const std::string& name, TensorD& t) {
        if (name.ends_with(".bias")) {
            t = random_normal<double>(t.shape(), rng, 0.05);
        }
    });
    s->g = rnd(token_shape(1, 16 * 16 + 8 * 8 + 4 * 4, 32), rng);
    GradCase c;
    c.op = "encoder_forward";
    c.primitive = false;
    c.max_coords = 6;
    c.wrt = {{"s3", &s->pyr.s3}, {"s4", &s->pyr.s4}, {"s5", &s->pyr.s5}};
    add_params(c, s->p, "");
    c.eval = [s] {
        EncoderCache<double> cache;
        const TensorD y = encoder_forward(s->pyr, s->p, s->cfg, Mode::train, &cache).tokens;
        return make_probe(y, s->g, cache.relu_signature());
    };
    c.analytic = [s] {
        EncoderCache<double> cache;
        encoder_forward(s->pyr, s->p, s->cfg, Mode::train, &cache);
        auto g = encoder_backward(cache, s->p, s->cfg, s->g);
        std::vector<TensorD> out{g.inputs.s3, g.inputs.s4, g.inputs.s5};
        append_grads(out, g.params);
        return out;
    };
    c.state = s;
    return c;
}

} // namespace

std::vector<GradCase> registered_cases(std::uint64_t seed)
{
    const Rng root(seed);
    std::vector<GradCase> cases;
    cases.push_back(sigmoid_case(root.fork("sigmoid")));
    cases.push_back(mul_case(root.fork("mul")));
    cases.push_back(relu_case(root.fork("relu")));
    cases.push_back(conv_case(root.fork("conv3"), "conv2d.3x3", {1, 2, 5, 5}, 3, 3, 1, false));
    cases.push_back(conv_case(root.fork("conv3s2"), "conv2d.3x3.stride2", {2, 3, 7, 6}, 4, 3, 2, false));
    cases.push_back(conv_case(root.fork("conv1"), "conv2d.1x1", {1, 3, 4, 5}, 2, 1, 1, false));
    cases.push_back(conv_case(root.fork("linear"), "linear_tokens", token_shape(2, 5, 6), 4, 1, 1, true));
    cases.push_back(patch_merge_case(root.fork("pm2"), 2));
    cases.push_back(patch_merge_case(root.fork("pm4"), 4));
    cases.push_back(resize_case(root.fork("up"), "bilinear_resize.up", {1, 2, 3, 4}, 7, 9));
    cases.push_back(resize_case(root.fork("down"), "bilinear_resize.down", {1, 2, 8, 8}, 3, 5));
    cases.push_back(layer_norm_case(root.fork("ln")));
    cases.push_back(gelu_case(root.fork("gelu")));
    cases.push_back(mhsa_case(root.fork("mhsa")));
    cases.push_back(rep_block_case(root.fork("rep_id"), true));
    cases.push_back(rep_block_case(root.fork("rep"), false));
    cases.push_back(lse_case(root.fork("lse2"), 2, GateActivation::none));
    cases.push_back(lse_case(root.fork("lse4"), 4, GateActivation::sigmoid));
    cases.push_back(gii_case(root.fork("gii")));
    cases.push_back(encoder_case(root.fork("encoder")));
    return cases;
}

std::vector<GradReport> check_all(const GradcheckOptions& opts)
{
    std::vector<GradReport> out;
    for (const GradCase& c : registered_cases(opts.seed)) {
        const double tol = c.primitive ? opts.primitive_tolerance : opts.tolerance;
        out.push_back(run_case(c, tol, opts.seed, opts.step));
    }
    return out;
}

bool all_passed(const std::vector<GradReport>& reports)
{
    return std::all_of(reports.begin(), reports.end(), [](const GradReport& r) { return r.passed; });
}

std::string format_report(const GradReport& r)
{
    std::int64_t checked = 0;
    std::int64_t skipped = 0;
    for (const auto& t : r.tensors) {
        checked += t.checked;
        skipped += t.skipped;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s %-26s max_rel_err=%.3e raw=%.3e tol=%.0e coords=%lld kink_skips=%lld",
                  r.passed ? "PASS" : "FAIL", r.op.c_str(), r.max_rel_err, r.max_raw_rel_err, r.tolerance,
                  static_cast<long long>(checked), static_cast<long long>(skipped));
    return buf;
}

std::string reports_to_json(const std::vector<GradReport>& reports)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json tensors = nlohmann::json::array();
        for (const auto& t : r.tensors) {
            tensors.push_back({{"name", t.name},
                               {"max_rel_err", t.max_rel_err},
                               {"max_raw_rel_err", t.max_raw_rel_err},
                               {"checked", t.checked},
                               {"noise_limited", t.noise_limited},
                               {"skipped", t.skipped}});
        }
        arr.push_back({{"op", r.op},
                       {"passed", r.passed},
                       {"max_rel_err", r.max_rel_err},
                       {"max_raw_rel_err", r.max_raw_rel_err},
                       {"tolerance", r.tolerance},
                       {"step", r.step},
                       {"tensors", tensors}});
    }
    nlohmann::json doc = {{"passed", all_passed(reports)}, {"reports", arr}};
    return doc.dump(2);
}

} // namespace lgi
