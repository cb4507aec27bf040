#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lgi/encoder.hpp"
#include "lgi/param_store.hpp"

namespace lgi {

// Element count of every entry whose name starts with `prefix`.
std::int64_t count_params(const ParamStore& store, std::string_view prefix = {});

// FLOP conventions (one multiply-accumulate = 2 FLOPs):
//   conv / linear   2 * c_out * c_in * k^2 * h_out * w_out + c_out * h_out * w_out (bias)
//   add/mul/relu/sigmoid/gelu   1 per output element
//   bilinear resize 7 per output element (0 for same-size)
//   layer norm      8 per element; softmax 4 per logit
//   attention       4 * S^2 * d for QK^T and PV, plus heads * S^2 for scaling
//   patch merge, split, concat, token reshapes   0
struct StageFlops {
    std::int64_t lse = 0;
    std::int64_t aifi = 0;
    std::int64_t fusion = 0;
    std::int64_t gii = 0;
    std::int64_t concat = 0;

    std::int64_t total() const { return lse + aifi + fusion + gii + concat; }
};

// Closed-form per-stage FLOPs of encoder_forward for a square input image of
// side `resolution` (pyramid strides 8/16/32). Throws ConfigError unless the
// resolution is a positive multiple of 32.
StageFlops count_flops(const EncoderConfig& cfg, std::int64_t resolution, Mode mode = Mode::deploy,
                       std::int64_t batch = 1);

struct ModuleParams {
    std::int64_t lse = 0;
    std::int64_t aifi = 0;
    std::int64_t fusion = 0;
    std::int64_t gii = 0;

    std::int64_t total() const { return lse + aifi + fusion + gii; }
};

// Parameter counts read off a freshly built encoder's ParamStore.
ModuleParams count_encoder_params(const EncoderConfig& cfg);

struct TimingStats {
    std::string op;
    Shape shape;
    int repetitions = 0;
    double median_s = 0.0;
    double p95_s = 0.0;
    double mean_s = 0.0;
    double min_s = 0.0;
    std::int64_t flops = 0; // per call, as recorded by the op
    double gflops_per_s() const { return median_s > 0.0 ? static_cast<double>(flops) / median_s * 1e-9 : 0.0; }
};

// Ids accepted by time_op.
std::vector<std::string> timed_ops();

// Times `op` on random inputs of `shape` (the low-level input for lse/gii,
// tokens (n, 1, h*w, c) for mhsa). Three warm-up calls are excluded. Throws
// ConfigError for unknown ops or repetitions < 30.
TimingStats time_op(std::string_view op, Shape shape, int repetitions, std::uint64_t seed = 0);

struct DeltaCheck {
    std::string row; // "lse", "gii", "lse+gii"
    double params_m = 0.0;
    double gflops = 0.0;
    double target_params_m = 0.0;
    double target_gflops = 0.0;
    bool params_ok = false;
    bool gflops_ok = false;
    bool ok() const { return params_ok && gflops_ok; }
};

struct AblationRow {
    std::string row; // "baseline", "lse", "gii", "lse+gii"
    EncoderConfig cfg;
    ModuleParams params;
    StageFlops flops;
};

struct CostReport {
    std::int64_t resolution = 640;
    std::vector<AblationRow> rows;    // baseline, lse, gii, lse+gii
    std::vector<DeltaCheck> deltas;   // lse, gii, lse+gii relative to baseline
    std::vector<TimingStats> timings; // optional
    double tolerance = 0.5;

    bool deltas_ok() const;
};

// Reference ablation targets (millions of parameters, GFLOPs).
struct DeltaTarget {
    const char* row;
    double params_m;
    double gflops;
};
inline constexpr DeltaTarget kAblationTargets[] = {
    {"lse", 0.5, 2.0},
    {"gii", 0.5, 2.0},
    {"lse+gii", 1.1, 5.0},
};

// Builds the four ablation rows from `base` (its enable flags are overridden)
// and compares the deltas against kAblationTargets within +-tolerance.
CostReport cost_report(const EncoderConfig& base, std::int64_t resolution, double tolerance = 0.5);

std::string format_cost_report(const CostReport& r);
std::string cost_report_to_json(const CostReport& r);

} // namespace lgi
