#include "lgi/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "json.hpp"
#include "lgi/flops.hpp"
#include "lgi/patch_merge.hpp"
#include "lgi/resize.hpp"

namespace lgi {

std::int64_t count_params(const ParamStore& store, std::string_view prefix)
{
    return store.count_params(prefix);
}

namespace {

struct FlopModel {
    std::int64_t n;
    Mode mode;

    std::int64_t conv(std::int64_t c_in, std::int64_t c_out, int k, int stride, std::int64_t h, std::int64_t w) const
    {
        const int pad = (k - 1) / 2;
        const std::int64_t ho = conv_out_size(h, k, stride, pad);
        const std::int64_t wo = conv_out_size(w, k, stride, pad);
        return n * (2 * c_out * c_in * k * k * ho * wo + c_out * ho * wo);
    }
    std::int64_t elem(std::int64_t c, std::int64_t h, std::int64_t w) const { return n * c * h * w; }
    std::int64_t resize(std::int64_t c, std::int64_t hi, std::int64_t wi, std::int64_t ho, std::int64_t wo) const
    {
        return hi == ho && wi == wo ? 0 : 7 * n * c * ho * wo;
    }
    // RepBlock with identity branch, c -> c.
    std::int64_t rep(std::int64_t c, std::int64_t h, std::int64_t w) const
    {
        if (mode == Mode::deploy) {
            return conv(c, c, 3, 1, h, w) + elem(c, h, w);
        }
        return conv(c, c, 3, 1, h, w) + conv(c, c, 1, 1, h, w) + 3 * elem(c, h, w);
    }
    std::int64_t gii(std::int64_t c, std::int64_t hl, std::int64_t wl, std::int64_t hh, std::int64_t wh) const
    {
        return conv(c, c, 1, 1, hh, wh) + elem(c, hh, wh)             // weight branch + sigmoid
               + resize(c, hh, wh, hl, wl) + conv(c, c, 1, 1, hh, wh) // info branch
               + resize(c, hh, wh, hl, wl) + conv(c, c, 1, 1, hl, wl) // low branch
               + 2 * elem(c, hl, wl) + rep(c, hl, wl);
    }
};

} // namespace

StageFlops count_flops(const EncoderConfig& cfg, std::int64_t resolution, Mode mode, std::int64_t batch)
{
    cfg.validate();
    if (resolution <= 0 || resolution % 32 != 0) {
        throw ConfigError("resolution must be a positive multiple of 32, got " + std::to_string(resolution));
    }
    if (batch <= 0) {
        throw ConfigError("batch must be positive");
    }
    const FlopModel m{batch, mode};
    const std::int64_t d = cfg.d_model;
    const std::int64_t h3 = resolution / 8, h4 = resolution / 16, h5 = resolution / 32;
    StageFlops f;

    if (cfg.enable_lse) {
        const std::int64_t k = cfg.split_k();
        const std::int64_t gate = cfg.gate_activation == GateActivation::sigmoid ? 1 : 0;
        f.lse += m.conv(d, d, 3, 1, h3, h3) + m.conv(4 * d, k, 1, 1, h4, h4) + (1 + gate) * m.elem(k, h4, h4);
        f.lse += m.conv(d, d, 3, 1, h3, h3) + m.conv(16 * d, k, 1, 1, h5, h5) + (1 + gate) * m.elem(k, h5, h5);
    }

    const std::int64_t s = h5 * h5;
    const std::int64_t ff = cfg.d_ff;
    const std::int64_t heads = cfg.heads;
    const std::int64_t per_layer = batch * (8 * s * d             // ln1
                                            + s * d               // + pos
                                            + 3 * (2 * s * d * d + s * d) // q, k, v
                                            + 4 * s * s * d + heads * s * s // QK^T, PV, scaling
                                            + 4 * heads * s * s   // softmax
                                            + 2 * s * d * d + s * d // o
                                            + s * d               // residual
                                            + 8 * s * d           // ln2
                                            + 2 * s * d * ff + s * ff // ffn1
                                            + s * ff              // gelu
                                            + 2 * s * ff * d + s * d // ffn2
                                            + s * d);             // residual
    f.aifi = per_layer * cfg.aifi_depth;

    f.fusion = m.conv(d, d, 1, 1, h5, h5)                                           // lateral5
               + m.resize(d, h5, h5, h4, h4) + m.elem(d, h4, h4) + m.rep(d, h4, h4) // td4
               + m.conv(d, d, 1, 1, h4, h4)                                         // lateral4
               + m.resize(d, h4, h4, h3, h3) + m.elem(d, h3, h3) + m.rep(d, h3, h3) // td3
               + m.conv(d, d, 3, 2, h3, h3) + m.elem(d, h4, h4) + m.rep(d, h4, h4)  // bu4
               + m.conv(d, d, 3, 2, h4, h4) + m.elem(d, h5, h5) + m.rep(d, h5, h5); // bu5

    if (cfg.enable_gii) {
        f.gii = m.gii(d, h3, h3, h5, h5);
        if (cfg.gii_to_mid) {
            f.gii += m.gii(d, h4, h4, h5, h5);
        }
    }
    return f;
}

ModuleParams count_encoder_params(const EncoderConfig& cfg)
{
    const EncoderParams<float> p = make_encoder<float>(cfg, Rng(0));
    const ParamStore store = ParamStore::from_params(p);
    ModuleParams out;
    out.lse = count_params(store, "lse.");
    out.aifi = count_params(store, "aifi.");
    out.fusion = count_params(store, "fusion.");
    out.gii = count_params(store, "gii.");
    return out;
}

std::vector<std::string> timed_ops()
{
    return {"noop", "conv3x3", "conv1x1", "patch_merge", "resize", "sigmoid", "rep_block", "lse", "gii", "mhsa"};
}

TimingStats time_op(std::string_view op, Shape shape, int repetitions, std::uint64_t seed)
{
    if (repetitions < 30) {
        throw ConfigError("time_op: repetitions must be at least 30, got " + std::to_string(repetitions));
    }
    if (shape.n <= 0 || shape.c <= 0 || shape.h <= 0 || shape.w <= 0) {
        throw ConfigError("time_op: shape " + shape.str() + " must be positive");
    }
    Rng rng(seed);
    const std::int64_t c = shape.c;
    const Tensor x = random_uniform<float>(shape, rng);
    std::function<void()> fn;
    if (op == "noop") {
        fn = [] {};
    } else if (op == "conv3x3" || op == "conv1x1") {
        auto p = std::make_shared<ConvParams<float>>(make_conv<float>(c, c, op == "conv3x3" ? 3 : 1, 1, rng));
        fn = [&x, p] { (void)conv2d(x, *p); };
    } else if (op == "patch_merge") {
        fn = [&x] { (void)patch_merge(x, 2); };
    } else if (op == "resize") {
        fn = [&x] { (void)bilinear_resize(x, 2 * x.h(), 2 * x.w()); };
    } else if (op == "sigmoid") {
        fn = [&x] { (void)sigmoid(x); };
    } else if (op == "rep_block") {
        auto p = std::make_shared<RepBlockParams<float>>(reparameterize(make_rep_block<float>(c, c, true, rng)));
        fn = [&x, p] { (void)rep_block(x, *p, Mode::deploy); };
    } else if (op == "lse") {
        if (shape.h % 2 != 0 || shape.w % 2 != 0 || c < 2) {
            throw ConfigError("time_op: lse needs even spatial dims and c >= 2");
        }
        auto hi = std::make_shared<Tensor>(random_uniform<float>({shape.n, c, shape.h / 2, shape.w / 2}, rng));
        auto p = std::make_shared<LseParams<float>>(make_lse<float>(c, c, c / 2, 2, GateActivation::none, rng));
        fn = [&x, hi, p] { (void)lse_forward(x, *hi, *p); };
    } else if (op == "gii") {
        const Shape hs{shape.n, c, std::max<std::int64_t>(1, shape.h / 4), std::max<std::int64_t>(1, shape.w / 4)};
        auto hi = std::make_shared<Tensor>(random_uniform<float>(hs, rng));
        auto p = std::make_shared<GiiParams<float>>(make_gii<float>(c, c, rng));
        p->rep = reparameterize(p->rep);
        fn = [&x, hi, p] { (void)gii_forward(x, *hi, *p, Mode::deploy); };
    } else if (op == "mhsa") {
        if (c % 4 != 0) {
            throw ConfigError("time_op: mhsa needs c divisible by 4");
        }
        const int heads = c % 8 == 0 ? 8 : 1;
        auto tok = std::make_shared<Tensor>(x.reshaped(token_shape(shape.n, shape.h * shape.w, c)));
        auto pos = std::make_shared<Tensor>(sincos_pos2d<float>(shape.h, shape.w, c));
        auto p = std::make_shared<AttentionParams<float>>(make_attention<float>(c, heads, 4 * c, rng));
        fn = [tok, pos, p] { (void)mhsa_layer(*tok, *p, *pos); };
    } else {
        throw ConfigError("time_op: unknown op \"" + std::string(op) + "\"");
    }

    TimingStats st;
    st.op = std::string(op);
    st.shape = shape;
    st.repetitions = repetitions;
    {
        flops::Scope scope;
        fn();
        st.flops = scope.count();
    }
    fn();
    fn();
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(repetitions));
    for (int i = 0; i < repetitions; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    st.median_s = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    st.p95_s = samples[static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1];
    st.min_s = samples.front();
    double acc = 0.0;
    for (double v : samples) acc += v;
    st.mean_s = acc / static_cast<double>(n);
    return st;
}

bool CostReport::deltas_ok() const
{
    return !deltas.empty() && std::all_of(deltas.begin(), deltas.end(), [](const DeltaCheck& d) { return d.ok(); });
}

CostReport cost_report(const EncoderConfig& base, std::int64_t resolution, double tolerance)
{
    CostReport r;
    r.resolution = resolution;
    r.tolerance = tolerance;
    const struct {
        const char* name;
        bool lse;
        bool gii;
    } rows[] = {{"baseline", false, false}, {"lse", true, false}, {"gii", false, true}, {"lse+gii", true, true}};
    for (const auto& row : rows) {
        AblationRow a;
        a.row = row.name;
        a.cfg = base;
        a.cfg.enable_lse = row.lse;
        a.cfg.enable_gii = row.gii;
        a.params = count_encoder_params(a.cfg);
        a.flops = count_flops(a.cfg, resolution);
        r.rows.push_back(a);
    }
    const AblationRow& b = r.rows[0];
    for (const DeltaTarget& t : kAblationTargets) {
        const auto it = std::find_if(r.rows.begin(), r.rows.end(), [&](const AblationRow& a) { return a.row == t.row; });
        DeltaCheck d;
        d.row = t.row;
        d.params_m = static_cast<double>(it->params.total() - b.params.total()) * 1e-6;
        d.gflops = static_cast<double>(it->flops.total() - b.flops.total()) * 1e-9;
        d.target_params_m = t.params_m;
        d.target_gflops = t.gflops;
        d.params_ok = std::abs(d.params_m - t.params_m) <= tolerance * t.params_m;
        d.gflops_ok = std::abs(d.gflops - t.gflops) <= tolerance * t.gflops;
        r.deltas.push_back(d);
    }
    return r;
}

std::string format_cost_report(const CostReport& r)
{
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "resolution %lldx%lld, d_model %lld\n", static_cast<long long>(r.resolution),
                  static_cast<long long>(r.resolution), static_cast<long long>(r.rows.at(0).cfg.d_model));
    out += buf;
    std::snprintf(buf, sizeof buf, "%-9s %10s %10s %10s %10s %10s | %9s %9s %9s %9s %9s\n", "row", "P.lse", "P.aifi",
                  "P.fusion", "P.gii", "P.total", "G.lse", "G.aifi", "G.fusion", "G.gii", "G.total");
    out += buf;
    for (const AblationRow& a : r.rows) {
        std::snprintf(buf, sizeof buf, "%-9s %10lld %10lld %10lld %10lld %10lld | %9.3f %9.3f %9.3f %9.3f %9.3f\n",
                      a.row.c_str(), static_cast<long long>(a.params.lse), static_cast<long long>(a.params.aifi),
                      static_cast<long long>(a.params.fusion), static_cast<long long>(a.params.gii),
                      static_cast<long long>(a.params.total()), a.flops.lse * 1e-9, a.flops.aifi * 1e-9,
                      a.flops.fusion * 1e-9, a.flops.gii * 1e-9, a.flops.total() * 1e-9);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "deltas vs baseline (tolerance +-%.0f%%):\n", r.tolerance * 100.0);
    out += buf;
    for (const DeltaCheck& d : r.deltas) {
        std::snprintf(buf, sizeof buf, "  %-8s params %+8.3fM (target %+.1fM) %s   GFLOPs %+8.3f (target %+.1f) %s\n",
                      d.row.c_str(), d.params_m, d.target_params_m, d.params_ok ? "ok" : "OUT", d.gflops,
                      d.target_gflops, d.gflops_ok ? "ok" : "OUT");
        out += buf;
    }
    for (const TimingStats& t : r.timings) {
        std::snprintf(buf, sizeof buf,
                      "time %-12s %-18s median %10.3f ms  p95 %10.3f ms  (%d reps, %.3f GFLOP, %.2f GFLOP/s)\n",
                      t.op.c_str(), t.shape.str().c_str(), t.median_s * 1e3, t.p95_s * 1e3, t.repetitions,
                      t.flops * 1e-9, t.gflops_per_s());
        out += buf;
    }
    return out;
}

std::string cost_report_to_json(const CostReport& r)
{
    using nlohmann::json;
    json rows = json::array();
    for (const AblationRow& a : r.rows) {
        rows.push_back({{"row", a.row},
                        {"params", {{"lse", a.params.lse},
                                    {"aifi", a.params.aifi},
                                    {"fusion", a.params.fusion},
                                    {"gii", a.params.gii},
                                    {"total", a.params.total()}}},
                        {"flops", {{"lse", a.flops.lse},
                                   {"aifi", a.flops.aifi},
                                   {"fusion", a.flops.fusion},
                                   {"gii", a.flops.gii},
                                   {"concat", a.flops.concat},
                                   {"total", a.flops.total()}}}});
    }
    json deltas = json::array();
    for (const DeltaCheck& d : r.deltas) {
        deltas.push_back({{"row", d.row},
                          {"params_m", d.params_m},
                          {"gflops", d.gflops},
                          {"target_params_m", d.target_params_m},
                          {"target_gflops", d.target_gflops},
                          {"params_ok", d.params_ok},
                          {"gflops_ok", d.gflops_ok}});
    }
    json timings = json::array();
    for (const TimingStats& t : r.timings) {
        timings.push_back({{"op", t.op},
                           {"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}},
                           {"repetitions", t.repetitions},
                           {"median_s", t.median_s},
                           {"p95_s", t.p95_s},
                           {"mean_s", t.mean_s},
                           {"min_s", t.min_s},
                           {"flops", t.flops},
                           {"gflops_per_s", t.gflops_per_s()}});
    }
    json doc = {{"resolution", r.resolution},
                {"d_model", r.rows.at(0).cfg.d_model},
                {"tolerance", r.tolerance},
                {"rows", rows},
                {"deltas", deltas},
                {"deltas_ok", r.deltas_ok()},
                {"timings", timings}};
    return doc.dump(2);
}

} // namespace lgi
